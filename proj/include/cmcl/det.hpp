#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cmcl/geometry.hpp"
#include "cmcl/kernel_thinning.hpp"
#include "cmcl/util.hpp"

namespace cmcl {

struct BoundingBox {
  double xmin = 0.0;
  double xmax = 0.0;
  double ymin = 0.0;
  double ymax = 0.0;

  double area() const { return (xmax - xmin) * (ymax - ymin); }
  bool contains(Vec2 p) const { return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct DetNode {
  static constexpr std::uint32_t kNoChild = 0xFFFFFFFFu;

  BoundingBox bbox;
  double density = 0.0;  // 1/m^2; meaningful on leaves
  std::uint8_t split_dim = 0;
  double split_value = 0.0;
  std::uint32_t left = kNoChild;
  std::uint32_t right = kNoChild;
  bool leaf = true;

  friend bool operator==(const DetNode&, const DetNode&) = default;
};

/// Piecewise-constant density over axis-aligned boxes. nodes[0] is the root. A tree whose
/// records are all leaves (the form sent over the wire) is queried by scanning them.
struct DensityTree {
  std::vector<DetNode> nodes;

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const DetNode& n) { return n.leaf; }));
  }
  std::vector<DetNode> leaves() const {
    std::vector<DetNode> out;
    for (const auto& n : nodes) {
      if (n.leaf) out.push_back(n);
    }
    return out;
  }
  /// Integral of the density over all leaves.
  double integral() const {
    CompensatedSum s;
    for (const auto& n : nodes) {
      if (n.leaf) s.add(n.density * n.bbox.area());
    }
    return s.value();
  }
  friend bool operator==(const DensityTree&, const DensityTree&) = default;
};

/// Leaf records only, children cleared.
inline DensityTree leaves_only(const DensityTree& t) {
  DensityTree out;
  for (const auto& n : t.nodes) {
    if (!n.leaf) continue;
    DetNode l = n;
    l.left = l.right = DetNode::kNoChild;
    out.nodes.push_back(l);
  }
  return out;
}

namespace detail {

struct DetLeafWork {
  std::size_t node = 0;
  std::vector<Vec2> points;
  // best split found for this leaf
  double gain = -std::numeric_limits<double>::infinity();
  int dim = -1;
  double cut = 0.0;
};

// Leave-one-out estimate of the integrated squared error contributed by one leaf holding n of
// N points over volume v:  n^2 / (N^2 v) - 2 n (n - 1) / (N (N - 1) v).
inline double loo_score(double n, double total, double v) {
  return (n * n) / (total * total * v) - 2.0 * n * (n - 1.0) / (total * (total - 1.0) * v);
}

inline void find_best_split(DetLeafWork& w, const BoundingBox& box, std::size_t total, std::size_t tries) {
  w.gain = -std::numeric_limits<double>::infinity();
  w.dim = -1;
  const std::size_t n = w.points.size();
  if (n < 2) return;
  const double N = static_cast<double>(total);
  const double parent = loo_score(static_cast<double>(n), N, box.area());
  std::vector<double> coords(n);
  for (int dim = 0; dim < 2; ++dim) {
    for (std::size_t i = 0; i < n; ++i) coords[i] = dim == 0 ? w.points[i].x : w.points[i].y;
    std::sort(coords.begin(), coords.end());
    std::size_t last = 0;
    for (std::size_t j = 1; j <= tries; ++j) {
      auto i = static_cast<std::size_t>(std::llround(static_cast<double>(j) * n / (tries + 1.0)));
      i = std::clamp<std::size_t>(i, 1, n - 1);
      if (i == last) continue;
      last = i;
      if (!(coords[i - 1] < coords[i])) continue;
      const double cut = 0.5 * (coords[i - 1] + coords[i]);
      BoundingBox l = box;
      BoundingBox r = box;
      if (dim == 0) {
        l.xmax = cut;
        r.xmin = cut;
      } else {
        l.ymax = cut;
        r.ymin = cut;
      }
      if (!(l.area() > 0.0) || !(r.area() > 0.0)) continue;
      const double gain = parent - loo_score(static_cast<double>(i), N, l.area()) -
                          loo_score(static_cast<double>(n - i), N, r.area());
      if (gain > w.gain) {
        w.gain = gain;
        w.dim = dim;
        w.cut = cut;
      }
    }
  }
}

}  // namespace detail

/// Greedy density estimation tree. Each step splits the leaf/axis/cut (H quantile candidates per
/// axis) with the largest leave-one-out gain; stops at det_max_leaves or when no split improves.
inline DensityTree build_det(std::span<const Vec2> s, const CompressionConfig& cfg) {
  if (s.size() < 2) throw InvalidArgument("build_det needs at least 2 points");
  BoundingBox root{s[0].x, s[0].x, s[0].y, s[0].y};
  for (const auto& p : s) {
    root.xmin = std::min(root.xmin, p.x);
    root.xmax = std::max(root.xmax, p.x);
    root.ymin = std::min(root.ymin, p.y);
    root.ymax = std::max(root.ymax, p.y);
  }
  const double e = cfg.det_min_extent;
  if (root.xmax - root.xmin < e) {
    const double c = 0.5 * (root.xmin + root.xmax);
    root.xmin = c - 0.5 * e;
    root.xmax = c + 0.5 * e;
  }
  if (root.ymax - root.ymin < e) {
    const double c = 0.5 * (root.ymin + root.ymax);
    root.ymin = c - 0.5 * e;
    root.ymax = c + 0.5 * e;
  }

  DensityTree tree;
  tree.nodes.push_back(DetNode{root});
  std::vector<detail::DetLeafWork> work;
  work.push_back({0, {s.begin(), s.end()}});
  detail::find_best_split(work.back(), root, s.size(), cfg.det_tries);

  std::size_t leaves = 1;
  while (leaves < cfg.det_max_leaves) {
    std::size_t best = work.size();
    for (std::size_t i = 0; i < work.size(); ++i) {
      if (work[i].dim >= 0 && work[i].gain > 0.0 && (best == work.size() || work[i].gain > work[best].gain)) {
        best = i;
      }
    }
    if (best == work.size()) break;

    detail::DetLeafWork parent = std::move(work[best]);
    work.erase(work.begin() + static_cast<std::ptrdiff_t>(best));
    const auto li = static_cast<std::uint32_t>(tree.nodes.size());
    const auto ri = li + 1;
    DetNode& pn = tree.nodes[parent.node];
    pn.leaf = false;
    pn.split_dim = static_cast<std::uint8_t>(parent.dim);
    pn.split_value = parent.cut;
    pn.left = li;
    pn.right = ri;
    BoundingBox lb = pn.bbox;
    BoundingBox rb = pn.bbox;
    if (parent.dim == 0) {
      lb.xmax = parent.cut;
      rb.xmin = parent.cut;
    } else {
      lb.ymax = parent.cut;
      rb.ymin = parent.cut;
    }
    detail::DetLeafWork lw{li, {}}, rw{ri, {}};
    for (const auto& p : parent.points) {
      const double c = parent.dim == 0 ? p.x : p.y;
      (c <= parent.cut ? lw.points : rw.points).push_back(p);
    }
    tree.nodes.push_back(DetNode{lb});
    tree.nodes.push_back(DetNode{rb});
    detail::find_best_split(lw, lb, s.size(), cfg.det_tries);
    detail::find_best_split(rw, rb, s.size(), cfg.det_tries);
    work.push_back(std::move(lw));
    work.push_back(std::move(rw));
    ++leaves;
  }

  const double total = static_cast<double>(s.size());
  for (const auto& w : work) {
    DetNode& n = tree.nodes[w.node];
    n.density = (static_cast<double>(w.points.size()) / total) / n.bbox.area();
  }
  return tree;
}

/// Density of the leaf containing p; 0 outside the root box.
inline double query_det(const DensityTree& t, Vec2 p) {
  if (t.nodes.empty()) return 0.0;
  if (t.nodes[0].leaf) {
    for (const auto& n : t.nodes) {
      if (n.bbox.contains(p)) return n.density;
    }
    return 0.0;
  }
  if (!t.nodes[0].bbox.contains(p)) return 0.0;
  std::size_t i = 0;
  while (!t.nodes[i].leaf) {
    const DetNode& n = t.nodes[i];
    const double c = n.split_dim == 0 ? p.x : p.y;
    i = c <= n.split_value ? n.left : n.right;
  }
  return t.nodes[i].density;
}

}  // namespace cmcl
