#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <random>
#include <vector>

#include "cmcl/clustering.hpp"
#include "cmcl/det.hpp"
#include "cmcl/geometry.hpp"
#include "cmcl/kernel_thinning.hpp"
#include "cmcl/mcl.hpp"
#include "cmcl/util.hpp"
#include "cmcl/wire.hpp"

namespace cmcl {

/// Point set with a region label per point.
struct LabeledPoints {
  PositionSamples points;
  std::vector<int> labels;
  std::vector<Vec2> region_centers;
  double region_half_size = 0.0;

  /// Label of the square region containing p, or -1.
  int region_of(Vec2 p) const {
    for (std::size_t r = 0; r < region_centers.size(); ++r) {
      const Vec2 d = p - region_centers[r];
      if (std::abs(d.x) <= region_half_size && std::abs(d.y) <= region_half_size) return static_cast<int>(r);
    }
    return -1;
  }

  /// Number of distinct regions hit by at least one of pts.
  std::size_t regions_covered(std::span<const Vec2> pts) const {
    std::vector<bool> hit(region_centers.size(), false);
    for (const auto& p : pts) {
      const int r = region_of(p);
      if (r >= 0) hit[static_cast<std::size_t>(r)] = true;
    }
    return static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
  }
};

struct DiamondCenterConfig {
  double spacing = 3.0;      // distance of the outer regions from the center, m
  double half_size = 0.5;    // half side of each square region, m
  std::size_t per_region = 20;
};

/// Four square regions at (0, +-D) and (+-D, 0) plus one at the origin, points drawn uniformly
/// inside each. Labels: 0 = +x, 1 = +y, 2 = -x, 3 = -y, 4 = center.
inline LabeledPoints diamond_center(std::uint64_t seed, const DiamondCenterConfig& cfg = {}) {
  const double D = cfg.spacing;
  LabeledPoints out;
  out.region_centers = {{D, 0.0}, {0.0, D}, {-D, 0.0}, {0.0, -D}, {0.0, 0.0}};
  out.region_half_size = cfg.half_size;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-cfg.half_size, cfg.half_size);
  for (std::size_t r = 0; r < out.region_centers.size(); ++r) {
    for (std::size_t i = 0; i < cfg.per_region; ++i) {
      const double dx = u(rng);
      const double dy = u(rng);
      out.points.push_back(out.region_centers[r] + Vec2{dx, dy});
      out.labels.push_back(static_cast<int>(r));
    }
  }
  return out;
}

/// Equally weighted particles standing on the given points, heading 0.
inline Belief belief_from_points(std::span<const Vec2> pts) {
  Belief b;
  b.particles.reserve(pts.size());
  const double w = 1.0 / static_cast<double>(pts.size());
  for (const auto& p : pts) b.particles.push_back({make_pose(p.x, p.y, 0.0), w});
  return b;
}

/// Isotropic Gaussian mixture with equal component weights.
inline PositionSamples gaussian_mixture(std::span<const Vec2> means, double sigma, std::size_t n, Rng& rng) {
  PositionSamples out;
  out.reserve(n);
  std::uniform_int_distribution<std::size_t> comp(0, means.size() - 1);
  std::normal_distribution<double> g(0.0, sigma);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 m = means[comp(rng)];
    const double dx = g(rng);
    const double dy = g(rng);
    out.push_back(m + Vec2{dx, dy});
  }
  return out;
}

/// Representative points a method extracts from an equally weighted point set: the points
/// themselves (naive), k i.i.d. points, cluster means or centroids, DET leaf centres, or the
/// Compress++ coreset.
inline PositionSamples representatives(Method m, std::span<const Vec2> pts, std::size_t k, Rng& rng) {
  CompressionConfig cfg;
  cfg.k_clusters = k;
  cfg.det_max_leaves = k;
  PositionSamples out;
  switch (m) {
    case Method::kNaive:
      out.assign(pts.begin(), pts.end());
      break;
    case Method::kStdThinning:
      out = iid_thin(pts, std::min(k, pts.size()), rng);
      break;
    case Method::kKMeans:
      for (const auto& c : kmeans_cluster(pts, k, cfg.kmeans_iters, rng)) out.push_back(c.mean);
      break;
    case Method::kProrok:
      for (const auto& c : dnc_cluster(belief_from_points(pts), Detection{}, k)) out.push_back(c.centroid.position());
      break;
    case Method::kDet:
      for (const auto& n : build_det(pts, cfg).leaves()) {
        out.push_back({0.5 * (n.bbox.xmin + n.bbox.xmax), 0.5 * (n.bbox.ymin + n.bbox.ymax)});
      }
      break;
    case Method::kCompressPP:
      out = compresspp(pts, cfg, {}, rng).points;
      break;
  }
  return out;
}

}  // namespace cmcl
