#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cmcl/geometry.hpp"
#include "cmcl/grid.hpp"
#include "cmcl/util.hpp"

namespace cmcl {

struct Particle {
  Pose pose;
  double weight = 0.0;
  friend bool operator==(const Particle&, const Particle&) = default;
};

/// Weighted particle set. Weights are renormalized after every weighting/fusion step.
struct Belief {
  std::vector<Particle> particles;

  std::size_t size() const { return particles.size(); }
  bool empty() const { return particles.empty(); }
  friend bool operator==(const Belief&, const Belief&) = default;
};

/// One LiDAR sweep. Beams with range >= r_max carry no return.
struct Scan {
  std::vector<double> ranges;
  std::vector<double> bearings;
  double r_max = 12.0;
};

struct MclConfig {
  std::size_t n_particles = 2000;
  double sigma_odom_x = 0.05;
  double sigma_odom_y = 0.05;
  double sigma_odom_theta = 0.05;
  double sigma_obs = 0.5;
  double r_max = 12.0;
  double trigger_xy = 0.05;
  double trigger_theta = 0.05;
  std::size_t beam_stride = 18;
  double resample_threshold_fraction = 0.5;
  /// Rotational noise picks up this fraction of the translation (see predict()).
  double rot_per_trans = 0.1;
};

inline void validate(const MclConfig& c) {
  if (c.n_particles < 1) throw InvalidArgument("n_particles must be >= 1");
  if (c.sigma_odom_x < 0 || c.sigma_odom_y < 0 || c.sigma_odom_theta < 0) {
    throw InvalidArgument("odometry noise must be >= 0");
  }
  if (!(c.sigma_obs > 0) || !(c.r_max > 0)) throw InvalidArgument("sigma_obs and r_max must be > 0");
  if (c.beam_stride < 1) throw InvalidArgument("beam_stride must be >= 1");
  if (!(c.resample_threshold_fraction > 0 && c.resample_threshold_fraction <= 1)) {
    throw InvalidArgument("resample_threshold_fraction must be in (0, 1]");
  }
}

/// Sum of weights, order-robust.
inline double total_weight(const Belief& b) {
  CompensatedSum s;
  for (const auto& p : b.particles) s.add(p.weight);
  return s.value();
}

/// Scale weights to sum to one. Returns false (and leaves weights untouched) if the sum is
/// zero or not finite.
inline bool normalize(Belief& b) {
  const double total = total_weight(b);
  if (!(total > 0.0) || !std::isfinite(total)) return false;
  for (auto& p : b.particles) p.weight /= total;
  return true;
}

inline void set_uniform(Belief& b) {
  const double w = 1.0 / static_cast<double>(b.size());
  for (auto& p : b.particles) p.weight = w;
}

/// n poses uniform over free cells (uniform within each cell), uniform heading, equal weights.
inline Belief init_uniform(const OccupancyGrid& grid, std::size_t n, Rng& rng) {
  if (n < 1) throw InvalidArgument("init_uniform needs n >= 1");
  const auto free_cells = grid.cells_in_state(CellState::kFree);
  if (free_cells.empty()) throw InvalidArgument("map has no free cells");
  std::uniform_int_distribution<std::size_t> pick(0, free_cells.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double res = grid.resolution();
  const Pose& o = grid.origin();
  const double c = std::cos(o.theta);
  const double s = std::sin(o.theta);

  Belief b;
  b.particles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const CellIndex cell = free_cells[pick(rng)];
    const double gx = (cell.ix + unit(rng)) * res;
    const double gy = (cell.iy + unit(rng)) * res;
    const double theta = unit(rng) * kTwoPi;
    b.particles.push_back({make_pose(o.x + c * gx - s * gy, o.y + s * gx + c * gy, theta), 0.0});
  }
  set_uniform(b);
  return b;
}

/// n poses drawn from a Gaussian around `center` (tracking initialization).
inline Belief init_gaussian(const Pose& center, double sigma_xy, double sigma_theta, std::size_t n,
                            Rng& rng) {
  if (n < 1) throw InvalidArgument("init_gaussian needs n >= 1");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Belief b;
  b.particles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = center.x + sigma_xy * gauss(rng);
    const double y = center.y + sigma_xy * gauss(rng);
    const double t = center.theta + sigma_theta * gauss(rng);
    b.particles.push_back({make_pose(x, y, t), 0.0});
  }
  set_uniform(b);
  return b;
}

/// Sample the motion model for one particle.
///
/// The body-frame motion u is perturbed per axis by zero-mean Gaussian noise with
///   std_x = sigma_x * |t|,  std_y = sigma_y * |t|,  std_theta = sigma_theta * (|dtheta| + k * |t|)
/// where t = |(dx, dy)| and k = rot_per_trans, then composed with the pose.
inline Pose sample_motion(const Pose& p, const OdometryDelta& u, const MclConfig& cfg, Rng& rng) {
  const double t = u.translation();
  const double sx = cfg.sigma_odom_x * t;
  const double sy = cfg.sigma_odom_y * t;
  const double st = cfg.sigma_odom_theta * (std::abs(u.dtheta) + cfg.rot_per_trans * t);
  OdometryDelta noisy = u;
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (sx > 0.0) noisy.dx += sx * gauss(rng);
  if (sy > 0.0) noisy.dy += sy * gauss(rng);
  if (st > 0.0) noisy.dtheta += st * gauss(rng);
  return compose(p, noisy);
}

inline void predict_in_place(Belief& b, const OdometryDelta& u, const MclConfig& cfg, Rng& rng) {
  for (auto& p : b.particles) p.pose = sample_motion(p.pose, u, cfg, rng);
}

inline Belief predict(Belief b, const OdometryDelta& u, const MclConfig& cfg, Rng& rng) {
  predict_in_place(b, u, cfg, rng);
  return b;
}

/// Beam-end likelihood factor for an endpoint at distance d from the nearest obstacle.
inline double beam_likelihood(double d, double sigma_obs) {
  return std::exp(-(d * d) / (2.0 * sigma_obs * sigma_obs));
}

namespace detail {

// Used beams of a scan as body-frame endpoints.
inline std::vector<Vec2> used_beam_endpoints(const Scan& z, const MclConfig& cfg) {
  std::vector<Vec2> out;
  for (std::size_t k = 0; k < z.ranges.size(); k += cfg.beam_stride) {
    const double r = z.ranges[k];
    if (r >= z.r_max || r >= cfg.r_max) continue;
    out.push_back({r * std::cos(z.bearings[k]), r * std::sin(z.bearings[k])});
  }
  return out;
}

inline double endpoints_log_likelihood(const Pose& pose, std::span<const Vec2> body, const DistanceField& df,
                                       double inv_two_sigma2) {
  const double c = std::cos(pose.theta);
  const double s = std::sin(pose.theta);
  double acc = 0.0;
  for (const auto& e : body) {
    const double d = df.at_world({pose.x + c * e.x - s * e.y, pose.y + s * e.x + c * e.y});
    acc -= d * d * inv_two_sigma2;
  }
  return acc;
}

}  // namespace detail

/// Log of the product of beam-end factors over the used beams (every beam_stride-th beam with
/// range < r_max).
inline double scan_log_likelihood(const Pose& pose, const Scan& z, const DistanceField& df,
                                  const MclConfig& cfg) {
  const auto body = detail::used_beam_endpoints(z, cfg);
  return detail::endpoints_log_likelihood(pose, body, df, 1.0 / (2.0 * cfg.sigma_obs * cfg.sigma_obs));
}

struct WeightResult {
  /// All products underflowed (or priors were all zero); weights were reset to uniform.
  bool reset_to_uniform = false;
};

/// Multiply every weight by its scan likelihood and renormalize. Evaluated in the log domain
/// relative to the best particle so long scans do not underflow.
inline WeightResult weight_scan_in_place(Belief& b, const Scan& z, const DistanceField& df,
                                         const MclConfig& cfg) {
  if (z.ranges.empty()) throw InvalidArgument("weight_scan needs a nonempty scan");
  if (z.ranges.size() != z.bearings.size()) throw InvalidArgument("scan ranges/bearings size mismatch");
  const std::size_t n = b.size();
  const auto body = detail::used_beam_endpoints(z, cfg);
  const double inv = 1.0 / (2.0 * cfg.sigma_obs * cfg.sigma_obs);
  std::vector<double> logw(n);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = b.particles[i].weight;
    logw[i] = w > 0.0 ? std::log(w) + detail::endpoints_log_likelihood(b.particles[i].pose, body, df, inv)
                      : -std::numeric_limits<double>::infinity();
    best = std::max(best, logw[i]);
  }
  WeightResult result;
  if (!std::isfinite(best)) {
    set_uniform(b);
    result.reset_to_uniform = true;
    return result;
  }
  for (std::size_t i = 0; i < n; ++i) b.particles[i].weight = std::exp(logw[i] - best);
  if (!normalize(b)) {
    set_uniform(b);
    result.reset_to_uniform = true;
  }
  return result;
}

inline Belief weight_scan(Belief b, const Scan& z, const DistanceField& df, const MclConfig& cfg) {
  weight_scan_in_place(b, z, df, cfg);
  return b;
}

/// 1 / sum(w^2) for normalized weights; in [1, N].
inline double effective_sample_size(const Belief& b) {
  CompensatedSum s;
  for (const auto& p : b.particles) s.add(p.weight * p.weight);
  return 1.0 / s.value();
}

/// Systematic resampling offsets: indices selected by a single random offset in [0, 1/N).
inline std::vector<std::size_t> low_variance_indices(const Belief& b, std::size_t n_out, Rng& rng) {
  std::vector<std::size_t> idx;
  idx.reserve(n_out);
  if (n_out == 0) return idx;
  const double step = 1.0 / static_cast<double>(n_out);
  std::uniform_real_distribution<double> offset(0.0, step);
  const double r = offset(rng);
  std::size_t i = 0;
  double c = b.particles[0].weight;
  for (std::size_t m = 0; m < n_out; ++m) {
    const double u = r + static_cast<double>(m) * step;
    while (u >= c && i + 1 < b.size()) {
      ++i;
      c += b.particles[i].weight;
    }
    idx.push_back(i);
  }
  return idx;
}

inline Belief resample_low_variance(const Belief& b, Rng& rng) {
  if (b.empty()) return b;
  const auto idx = low_variance_indices(b, b.size(), rng);
  Belief out;
  out.particles.reserve(b.size());
  const double w = 1.0 / static_cast<double>(b.size());
  for (std::size_t i : idx) out.particles.push_back({b.particles[i].pose, w});
  return out;
}

/// Weighted mean position and circular-mean heading. A zero resultant gives theta = 0.
inline Pose estimate_pose(const Belief& b) {
  CompensatedSum sx, sy, ss, sc, sw;
  for (const auto& p : b.particles) {
    sx.add(p.weight * p.pose.x);
    sy.add(p.weight * p.pose.y);
    ss.add(p.weight * std::sin(p.pose.theta));
    sc.add(p.weight * std::cos(p.pose.theta));
    sw.add(p.weight);
  }
  const double w = sw.value();
  const double s = ss.value();
  const double c = sc.value();
  const double theta = (std::abs(s) < 1e-12 && std::abs(c) < 1e-12) ? 0.0 : std::atan2(s, c);
  return make_pose(sx.value() / w, sy.value() / w, theta);
}

/// Single-robot filter with the motion trigger: odometry accumulates until the robot has moved
/// at least (trigger_xy, trigger_theta); only then does a scan get integrated.
class MclFilter {
 public:
  MclFilter(Belief initial, MclConfig cfg, Rng rng)
      : belief_(std::move(initial)), cfg_(cfg), rng_(std::move(rng)) {
    validate(cfg_);
  }

  const Belief& belief() const { return belief_; }
  void set_belief(Belief b) {
    belief_ = std::move(b);
    cached_.reset();
  }
  Belief& mutable_belief() {
    cached_.reset();
    return belief_;
  }
  const MclConfig& config() const { return cfg_; }
  Rng& rng() { return rng_; }
  const OdometryDelta& pending_motion() const { return pending_; }
  std::size_t updates() const { return updates_; }
  std::size_t weight_resets() const { return weight_resets_; }

  void add_odometry(const OdometryDelta& u) { pending_ = compose(pending_, u); }

  bool motion_triggered() const {
    return pending_.translation() >= cfg_.trigger_xy || std::abs(pending_.dtheta) >= cfg_.trigger_theta;
  }

  /// Propagate particles through the accumulated motion (no weighting).
  void flush_motion() {
    if (pending_ == OdometryDelta{}) return;
    predict_in_place(belief_, pending_, cfg_, rng_);
    pending_ = {};
    cached_.reset();
  }

  /// Integrate a scan if the motion trigger fired. Returns true if an update happened.
  bool on_scan(const Scan& z, const DistanceField& df) {
    if (!motion_triggered()) return false;
    flush_motion();
    if (weight_scan_in_place(belief_, z, df, cfg_).reset_to_uniform) ++weight_resets_;
    cached_.reset();
    maybe_resample();
    ++updates_;
    return true;
  }

  void maybe_resample() {
    if (effective_sample_size(belief_) <
        cfg_.resample_threshold_fraction * static_cast<double>(belief_.size())) {
      belief_ = resample_low_variance(belief_, rng_);
      cached_.reset();
    }
  }

  /// Point estimate including motion not yet integrated.
  Pose estimate() const {
    if (!cached_) cached_ = estimate_pose(belief_);
    return compose(*cached_, pending_);
  }

 private:
  Belief belief_;
  MclConfig cfg_;
  Rng rng_;
  OdometryDelta pending_{};
  std::size_t updates_ = 0;
  std::size_t weight_resets_ = 0;
  mutable std::optional<Pose> cached_;
};

}  // namespace cmcl
