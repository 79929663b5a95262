#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <tuple>
#include <vector>

#include "cmcl/geometry.hpp"
#include "cmcl/kernel_thinning.hpp"
#include "cmcl/mcl.hpp"
#include "cmcl/util.hpp"

namespace cmcl {

/// Added to the diagonal of every cluster covariance.
inline constexpr double kCovarianceFloor = 1e-6;

struct GaussianCluster {
  Vec2 mean;
  Mat2 cov;
  double weight = 0.0;
  friend bool operator==(const GaussianCluster&, const GaussianCluster&) = default;
};

/// Compressed cluster of the detecting robot's particles (divide-and-conquer clustering).
/// Detection statistics are polar coordinates relative to the centroid pose.
struct ClusterAbstraction {
  Pose centroid;
  double weight = 0.0;
  Detection detection_mean;
  double var_range = 0.0;
  double var_bearing = 0.0;
  friend bool operator==(const ClusterAbstraction&, const ClusterAbstraction&) = default;
};

namespace detail {

inline std::vector<Vec2> kmeanspp_seed(std::span<const Vec2> s, std::size_t k, Rng& rng) {
  std::vector<Vec2> centers;
  centers.reserve(k);
  std::vector<bool> chosen(s.size(), false);
  std::uniform_int_distribution<std::size_t> first(0, s.size() - 1);
  std::size_t c0 = first(rng);
  centers.push_back(s[c0]);
  chosen[c0] = true;

  std::vector<double> d2(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) d2[i] = (s[i] - centers[0]).squared_norm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centers.size() < k) {
    CompensatedSum total;
    for (double v : d2) total.add(v);
    std::size_t pick = s.size();
    if (total.value() > 0.0) {
      const double target = unit(rng) * total.value();
      double acc = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc >= target) break;
      }
    } else {
      // every remaining point coincides with a center: choose uniformly among the unchosen
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (!chosen[i]) rest.push_back(i);
      }
      std::uniform_int_distribution<std::size_t> u(0, rest.size() - 1);
      pick = rest[u(rng)];
    }
    chosen[pick] = true;
    centers.push_back(s[pick]);
    for (std::size_t i = 0; i < s.size(); ++i) {
      d2[i] = std::min(d2[i], (s[i] - centers.back()).squared_norm());
    }
  }
  return centers;
}

inline std::size_t nearest_center(Vec2 p, const std::vector<Vec2>& centers) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = (p - centers[c]).squared_norm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding and exactly `iters` iterations (no convergence test).
/// Clusters report member fraction as weight and population covariance + floor.
inline std::vector<GaussianCluster> kmeans_cluster(std::span<const Vec2> s, std::size_t k, std::size_t iters,
                                                   Rng& rng) {
  if (k < 1) throw InvalidArgument("kmeans needs k >= 1");
  if (s.size() < k) throw InvalidArgument("kmeans needs at least k points");
  std::vector<Vec2> centers = detail::kmeanspp_seed(s, k, rng);
  std::vector<std::size_t> assign(s.size(), 0);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < s.size(); ++i) assign[i] = detail::nearest_center(s[i], centers);
    std::vector<double> sx(k, 0.0), sy(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      sx[assign[i]] += s[i].x;
      sy[assign[i]] += s[i].y;
      ++cnt[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (cnt[c] > 0) centers[c] = {sx[c] / cnt[c], sy[c] / cnt[c]};
    }
  }

  std::vector<GaussianCluster> out(k);
  std::vector<std::size_t> cnt(k, 0);
  for (std::size_t i = 0; i < s.size(); ++i) ++cnt[assign[i]];
  for (std::size_t c = 0; c < k; ++c) {
    out[c].mean = centers[c];
    out[c].cov = Mat2::isotropic(kCovarianceFloor);
    out[c].weight = static_cast<double>(cnt[c]) / static_cast<double>(s.size());
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto& cl = out[assign[i]];
    const double n = static_cast<double>(cnt[assign[i]]);
    const Vec2 d = s[i] - cl.mean;
    cl.cov.xx += d.x * d.x / n;
    cl.cov.xy += d.x * d.y / n;
    cl.cov.yy += d.y * d.y / n;
  }
  return out;
}

namespace detail {

inline void weighted_mean_var(std::span<const Particle> members, int axis, double& mean, double& var) {
  CompensatedSum w, m;
  for (const auto& p : members) {
    w.add(p.weight);
    m.add(p.weight * (axis == 0 ? p.pose.x : p.pose.y));
  }
  mean = m.value() / w.value();
  CompensatedSum v;
  for (const auto& p : members) {
    const double d = (axis == 0 ? p.pose.x : p.pose.y) - mean;
    v.add(p.weight * d * d);
  }
  var = v.value() / w.value();
}

// Lexicographic order on (axis coordinate, other coordinate, heading, weight); it makes the
// split independent of input order even with duplicate coordinates.
inline bool particle_less(const Particle& a, const Particle& b, int axis) {
  const double a0 = axis == 0 ? a.pose.x : a.pose.y;
  const double b0 = axis == 0 ? b.pose.x : b.pose.y;
  const double a1 = axis == 0 ? a.pose.y : a.pose.x;
  const double b1 = axis == 0 ? b.pose.y : b.pose.x;
  return std::tie(a0, a1, a.pose.theta, a.weight) < std::tie(b0, b1, b.pose.theta, b.weight);
}

inline std::pair<std::vector<Particle>, std::vector<Particle>> median_split(std::vector<Particle> group) {
  double mx = 0, vx = 0, my = 0, vy = 0;
  weighted_mean_var(group, 0, mx, vx);
  weighted_mean_var(group, 1, my, vy);
  const int axis = vy > vx ? 1 : 0;  // ties split x first
  std::sort(group.begin(), group.end(), [axis](const Particle& a, const Particle& b) {
    return particle_less(a, b, axis);
  });
  CompensatedSum total;
  for (const auto& p : group) total.add(p.weight);
  const double half = 0.5 * total.value();
  double acc = 0.0;
  double median = 0.0;
  for (const auto& p : group) {
    acc += p.weight;
    median = axis == 0 ? p.pose.x : p.pose.y;
    if (acc >= half) break;
  }
  std::size_t cut = 0;
  while (cut < group.size() && (axis == 0 ? group[cut].pose.x : group[cut].pose.y) <= median) ++cut;
  if (cut == 0 || cut == group.size()) cut = (group.size() + 1) / 2;  // all on one side of the median
  std::vector<Particle> right(group.begin() + static_cast<std::ptrdiff_t>(cut), group.end());
  group.resize(cut);
  return {std::move(group), std::move(right)};
}

inline ClusterAbstraction abstract_cluster(std::vector<Particle> members, const Detection& d, double total_weight) {
  // fixed summation order regardless of how members arrived
  std::sort(members.begin(), members.end(), [](const Particle& a, const Particle& b) {
    return particle_less(a, b, 0);
  });
  CompensatedSum w, x, y, s, c;
  for (const auto& p : members) {
    w.add(p.weight);
    x.add(p.weight * p.pose.x);
    y.add(p.weight * p.pose.y);
    s.add(p.weight * std::sin(p.pose.theta));
    c.add(p.weight * std::cos(p.pose.theta));
  }
  const double wsum = w.value();
  const double theta = (std::abs(s.value()) < 1e-12 && std::abs(c.value()) < 1e-12) ? 0.0
                                                                                    : std::atan2(s.value(), c.value());
  ClusterAbstraction out;
  out.centroid = make_pose(x.value() / wsum, y.value() / wsum, theta);
  out.weight = wsum / total_weight;

  std::vector<Detection> rel;
  rel.reserve(members.size());
  for (const auto& p : members) rel.push_back(to_relative(to_absolute(d, p.pose), out.centroid));
  CompensatedSum mr, bs, bc;
  for (std::size_t i = 0; i < members.size(); ++i) {
    mr.add(members[i].weight * rel[i].range);
    bs.add(members[i].weight * std::sin(rel[i].bearing));
    bc.add(members[i].weight * std::cos(rel[i].bearing));
  }
  out.detection_mean.range = mr.value() / wsum;
  out.detection_mean.bearing = std::atan2(bs.value(), bc.value());
  CompensatedSum vr, vb;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const double dr = rel[i].range - out.detection_mean.range;
    const double db = wrap_pi(rel[i].bearing - out.detection_mean.bearing);
    vr.add(members[i].weight * dr * dr);
    vb.add(members[i].weight * db * db);
  }
  out.var_range = vr.value() / wsum;
  out.var_bearing = vb.value() / wsum;
  return out;
}

}  // namespace detail

inline bool is_power_of_two(std::size_t k) { return k != 0 && (k & (k - 1)) == 0; }

/// Divide-and-conquer clustering: every group is split at the weighted median of its
/// higher-variance axis until k groups exist (k a power of two). A group with a single
/// particle is not split further, so fewer than k abstractions may come back.
inline std::vector<ClusterAbstraction> dnc_cluster(const Belief& b, const Detection& d, std::size_t k) {
  if (!is_power_of_two(k)) throw InvalidArgument("dnc_cluster needs k to be a power of 2");
  if (b.size() < k) throw InvalidArgument("dnc_cluster needs at least k particles");
  std::vector<Particle> all = b.particles;
  CompensatedSum tw;
  for (const auto& p : all) tw.add(p.weight);
  if (!(tw.value() > 0.0)) {
    for (auto& p : all) p.weight = 1.0;
  }
  const double total = tw.value() > 0.0 ? tw.value() : static_cast<double>(all.size());

  std::vector<std::vector<Particle>> groups;
  groups.push_back(std::move(all));
  for (std::size_t level = 1; level < k; level *= 2) {
    std::vector<std::vector<Particle>> next;
    next.reserve(groups.size() * 2);
    for (auto& g : groups) {
      if (g.size() < 2) {
        next.push_back(std::move(g));
        continue;
      }
      auto [l, r] = detail::median_split(std::move(g));
      next.push_back(std::move(l));
      next.push_back(std::move(r));
    }
    groups = std::move(next);
  }

  std::vector<ClusterAbstraction> out;
  out.reserve(groups.size());
  for (auto& g : groups) {
    CompensatedSum gw;
    for (const auto& p : g) gw.add(p.weight);
    if (!(gw.value() > 0.0)) continue;
    out.push_back(detail::abstract_cluster(std::move(g), d, total));
  }
  return out;
}

}  // namespace cmcl
