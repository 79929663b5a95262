#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "cmcl/geometry.hpp"
#include "cmcl/mcl.hpp"
#include "cmcl/util.hpp"

namespace cmcl {

/// Equally weighted 2-D positions (world frame).
using PositionSamples = std::vector<Vec2>;

/// Subset of a PositionSamples selected by thinning; coordinates are copied exactly.
struct CoreSet {
  std::vector<Vec2> points;
  friend bool operator==(const CoreSet&, const CoreSet&) = default;
};

/// Gaussian kernel k(x, y) = exp(-|x - y|^2 / (2 h^2)). bandwidth <= 0 selects the median
/// heuristic on the data the kernel is applied to.
struct KernelConfig {
  double bandwidth = 0.0;
  bool median_heuristic() const { return !(bandwidth > 0.0); }
};

struct CompressionConfig {
  std::size_t k_clusters = 8;
  std::size_t kmeans_iters = 5;
  std::size_t det_max_leaves = 20;
  std::size_t det_tries = 10;
  std::size_t oversample_g = 4;
  std::size_t thinning_k = 64;
  /// Smallest side of a DET bounding box, m.
  double det_min_extent = 0.05;
};

inline void validate(const CompressionConfig& c) {
  if (c.k_clusters < 1 || c.kmeans_iters < 1 || c.det_max_leaves < 1 || c.det_tries < 1 ||
      c.thinning_k < 1) {
    throw InvalidArgument("compression parameters must be >= 1");
  }
  if (!(c.det_min_extent > 0)) throw InvalidArgument("det_min_extent must be > 0");
}

/// One position per particle: where the detected robot would be if the detector stood there.
inline PositionSamples project_samples(const Belief& particles, const Detection& d) {
  PositionSamples out;
  out.reserve(particles.size());
  for (const auto& p : particles.particles) out.push_back(to_absolute(d, p.pose));
  return out;
}

/// Median pairwise distance. Inputs above 256 points are strided down to 256 first so the
/// cost stays bounded and no randomness is consumed.
inline double median_heuristic_bandwidth(std::span<const Vec2> pts) {
  constexpr std::size_t kMaxPoints = 256;
  std::vector<Vec2> sub;
  if (pts.size() > kMaxPoints) {
    sub.reserve(kMaxPoints);
    for (std::size_t i = 0; i < kMaxPoints; ++i) sub.push_back(pts[i * pts.size() / kMaxPoints]);
  } else {
    sub.assign(pts.begin(), pts.end());
  }
  std::vector<double> d;
  d.reserve(sub.size() * (sub.size() - 1) / 2);
  for (std::size_t i = 0; i < sub.size(); ++i) {
    for (std::size_t j = i + 1; j < sub.size(); ++j) d.push_back(distance(sub[i], sub[j]));
  }
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  // all points identical: any positive bandwidth gives the same (zero) discrepancy
  return *mid > 0.0 ? *mid : 1.0;
}

inline double resolve_bandwidth(const KernelConfig& k, std::span<const Vec2> pts) {
  return k.median_heuristic() ? median_heuristic_bandwidth(pts) : k.bandwidth;
}

class GaussianKernel {
 public:
  explicit GaussianKernel(double bandwidth) : inv_two_h2_(1.0 / (2.0 * bandwidth * bandwidth)) {}
  double operator()(Vec2 a, Vec2 b) const { return std::exp(-(a - b).squared_norm() * inv_two_h2_); }

 private:
  double inv_two_h2_;
};

/// MMD against a fixed reference set with a fixed bandwidth. The reference self-similarity
/// term is computed once, which makes repeated comparisons against one large set cheap.
class MmdReference {
 public:
  MmdReference(std::span<const Vec2> ref, double bandwidth)
      : ref_(ref.begin(), ref.end()), kernel_(bandwidth), self_(self_mean(ref_, kernel_)) {
    if (ref_.empty()) throw InvalidArgument("mmd needs nonempty inputs");
  }

  double operator()(std::span<const Vec2> s) const {
    if (s.empty()) throw InvalidArgument("mmd needs nonempty inputs");
    CompensatedSum cross;
    for (const auto& x : s) {
      for (const auto& y : ref_) cross.add(kernel_(x, y));
    }
    const double kab = cross.value() / (static_cast<double>(s.size()) * static_cast<double>(ref_.size()));
    return std::sqrt(std::max(0.0, self_mean(s, kernel_) - 2.0 * kab + self_));
  }

  static double self_mean(std::span<const Vec2> s, const GaussianKernel& k) {
    CompensatedSum acc;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) acc.add(k(s[i], s[j]));
    }
    const double n = static_cast<double>(s.size());
    return (2.0 * acc.value() + n) / (n * n);
  }

 private:
  std::vector<Vec2> ref_;
  GaussianKernel kernel_;
  double self_;
};

/// Biased (V-statistic) MMD between two equally weighted point sets under a Gaussian kernel.
/// The median-heuristic bandwidth is taken over the union of both sets.
inline double mmd(std::span<const Vec2> a, std::span<const Vec2> b, const KernelConfig& kcfg) {
  if (a.empty() || b.empty()) throw InvalidArgument("mmd needs nonempty inputs");
  double h = kcfg.bandwidth;
  if (kcfg.median_heuristic()) {
    std::vector<Vec2> both(a.begin(), a.end());
    both.insert(both.end(), b.begin(), b.end());
    h = median_heuristic_bandwidth(both);
  }
  return MmdReference(b, h)(a);
}

/// k points uniformly without replacement (partial Fisher-Yates; output order is random).
template <typename T>
std::vector<T> sample_without_replacement(std::span<const T> s, std::size_t k, Rng& rng) {
  if (k > s.size()) throw InvalidArgument("cannot sample more elements than the input holds");
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<T> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(s[idx[i]]);
  return out;
}

inline PositionSamples iid_thin(std::span<const Vec2> s, std::size_t k, Rng& rng) {
  return sample_without_replacement<Vec2>(s, k, rng);
}

/// Kernel halving with a fixed bandwidth: points are consumed in random pairs (x, x'); each
/// pair is split between two growing coresets S1, S2 so that MMD(S1 + x, S2 + x') is the
/// smaller of the two assignments. That comparison reduces to f(x) <= f(x') with
/// f(y) = sum_{S1} k(., y) - sum_{S2} k(., y). One of the two coresets is returned at random.
inline PositionSamples kt_halve_fixed(std::span<const Vec2> s, double bandwidth, Rng& rng) {
  if (s.size() % 2 != 0) throw InvalidArgument("kt_halve needs an even number of points");
  const std::size_t n = s.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const GaussianKernel k(bandwidth);
  PositionSamples s1, s2;
  s1.reserve(n / 2);
  s2.reserve(n / 2);
  for (std::size_t i = 0; i < n; i += 2) {
    const Vec2 x = s[order[i]];
    const Vec2 xp = s[order[i + 1]];
    double fx = 0.0;
    double fxp = 0.0;
    for (std::size_t m = 0; m < s1.size(); ++m) {
      fx += k(s1[m], x) - k(s2[m], x);
      fxp += k(s1[m], xp) - k(s2[m], xp);
    }
    if (fx <= fxp) {
      s1.push_back(x);
      s2.push_back(xp);
    } else {
      s1.push_back(xp);
      s2.push_back(x);
    }
  }
  std::bernoulli_distribution coin(0.5);
  return coin(rng) ? s1 : s2;
}

inline PositionSamples kt_halve(std::span<const Vec2> s, const KernelConfig& kcfg, Rng& rng) {
  if (s.size() % 2 != 0) throw InvalidArgument("kt_halve needs an even number of points");
  if (s.empty()) return {};
  return kt_halve_fixed(s, resolve_bandwidth(kcfg, s), rng);
}

/// Largest power of four <= n (n >= 1).
inline std::size_t floor_power_of_four(std::size_t n) {
  std::size_t p = 1;
  while (p <= n / 4) p *= 4;
  return p;
}

inline std::size_t isqrt_exact(std::size_t n) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

namespace detail {

// Compress with oversampling parameter g on a power-of-four sized input: returns 2^g sqrt(n)
// points (or the input when it is already at or below 4^g).
inline PositionSamples compress_recursive(std::span<const Vec2> s, std::size_t g, double h, Rng& rng) {
  const std::size_t n = s.size();
  std::size_t base = 1;
  for (std::size_t i = 0; i < g; ++i) base *= 4;
  if (n <= base) return {s.begin(), s.end()};

  std::vector<Vec2> shuffled(s.begin(), s.end());
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const std::size_t q = n / 4;
  PositionSamples merged;
  merged.reserve(n / 2);
  for (std::size_t part = 0; part < 4; ++part) {
    auto sub = compress_recursive(std::span<const Vec2>(shuffled).subspan(part * q, q), g, h, rng);
    merged.insert(merged.end(), sub.begin(), sub.end());
  }
  return kt_halve_fixed(merged, h, rng);
}

}  // namespace detail

/// Root thinning with Compress++: truncate to the largest power of four n <= N by uniform
/// subsampling, run Compress(g), then halve until exactly sqrt(n) points remain.
inline CoreSet compresspp(std::span<const Vec2> s, const CompressionConfig& cfg, const KernelConfig& kcfg,
                          Rng& rng) {
  if (s.size() < 4) throw InvalidArgument("compresspp needs at least 4 points");
  const std::size_t n = floor_power_of_four(s.size());
  PositionSamples base = n == s.size() ? PositionSamples(s.begin(), s.end()) : iid_thin(s, n, rng);
  const double h = resolve_bandwidth(kcfg, base);
  const std::size_t target = isqrt_exact(n);

  PositionSamples out = detail::compress_recursive(base, cfg.oversample_g, h, rng);
  while (out.size() > target) out = kt_halve_fixed(out, h, rng);
  return CoreSet{std::move(out)};
}

}  // namespace cmcl
