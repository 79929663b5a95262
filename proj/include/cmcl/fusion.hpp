#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cmcl/clustering.hpp"
#include "cmcl/det.hpp"
#include "cmcl/geometry.hpp"
#include "cmcl/kernel_thinning.hpp"
#include "cmcl/mcl.hpp"
#include "cmcl/wire.hpp"

namespace cmcl {

/// Added to every particle's detection likelihood before renormalizing.
inline constexpr double kLikelihoodFloor = 1e-12;

/// Detection noise. `sigma` is the Cartesian covariance used by the position-based rules; the
/// polar parameters are used by the cluster-abstraction rule.
struct DetectionModel {
  Mat2 sigma = Mat2::isotropic(0.01);
  double range_scale = 0.05;
  double bearing_sigma = 0.03;
  double observed_range = 0.0;

  /// Range-dependent model for one detection: sigma_r = range_scale * r, sigma_b = bearing_sigma.
  /// The Cartesian covariance is the isotropic bound max(sigma_r, r sigma_b, min_sigma)^2, since
  /// the receiver does not know the sender's heading.
  static DetectionModel for_detection(const Detection& d, double range_scale = 0.05, double bearing_sigma = 0.03,
                                      double min_sigma = 0.05) {
    if (!(range_scale > 0) || !(bearing_sigma > 0)) throw InvalidArgument("detection noise must be > 0");
    const double s = std::max({range_scale * d.range, d.range * bearing_sigma, min_sigma});
    DetectionModel m;
    m.sigma = Mat2::isotropic(s * s);
    m.range_scale = range_scale;
    m.bearing_sigma = bearing_sigma;
    m.observed_range = d.range;
    return m;
  }

  double polar_var_range() const {
    const double s = std::max(range_scale * observed_range, 1e-3);
    return s * s;
  }
  double polar_var_bearing() const { return bearing_sigma * bearing_sigma; }
};

/// Tag plus reciprocal sampling probability. DET never injects particles.
struct FusionStrategy {
  Method tag = Method::kCompressPP;
  double alpha = 0.06;

  FusionStrategy() = default;
  FusionStrategy(Method t, double a) : tag(t), alpha(t == Method::kDet ? 0.0 : a) {
    if (!(a >= 0.0 && a <= 1.0)) throw InvalidArgument("alpha must be in [0, 1]");
  }
};

inline Mat2 floored(Mat2 c) {
  c.xx = std::max(c.xx, 0.0) + kCovarianceFloor;
  c.yy = std::max(c.yy, 0.0) + kCovarianceFloor;
  // keep it positive definite if the off-diagonal is inconsistent with the diagonal
  const double lim = std::sqrt(c.xx * c.yy) * (1.0 - 1e-9);
  c.xy = std::clamp(c.xy, -lim, lim);
  return c;
}

/// Bivariate normal density of xb about center.
inline double detection_likelihood(Vec2 xb, Vec2 center, const Mat2& sigma) {
  Mat2 s = sigma;
  if (!(s.det() > 0.0)) s = floored(s);
  return Gaussian2(center, s)(xb);
}

namespace detail {

// Equally weighted mixture of N(center_j, sigma) evaluated at every particle position.
inline std::vector<double> point_mixture(const Belief& b, std::span<const Vec2> centers, const Mat2& sigma) {
  Mat2 s = sigma;
  if (!(s.det() > 0.0)) s = floored(s);
  const Gaussian2 unit({0.0, 0.0}, s);
  const double inv_m = 1.0 / static_cast<double>(centers.size());
  std::vector<double> out(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double x = b.particles[i].pose.x;
    const double y = b.particles[i].pose.y;
    double acc = 0.0;
    for (const auto& c : centers) acc += unit.density(x - c.x, y - c.y);
    out[i] = acc * inv_m;
  }
  return out;
}

inline std::vector<Vec2> project_poses(std::span<const Pose> poses, const Detection& d) {
  std::vector<Vec2> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(to_absolute(d, p));
  return out;
}

inline double polar_density(const Detection& rel, const Detection& mean, double var_r, double var_b) {
  const double dr = rel.range - mean.range;
  const double db = wrap_pi(rel.bearing - mean.bearing);
  return std::exp(-0.5 * (dr * dr / var_r + db * db / var_b)) / (kTwoPi * std::sqrt(var_r * var_b));
}

}  // namespace detail

/// The message's detection distribution evaluated at every particle (before the floor).
inline std::vector<double> message_likelihoods(const Belief& b, const BeliefSummary& msg,
                                               const DetectionModel& model) {
  if (!payload_matches(msg.method, msg.payload)) throw InvalidArgument("payload does not match method tag");
  if (msg.count() == 0) throw InvalidArgument("empty summary payload");
  const Detection& d = msg.detection;
  switch (msg.method) {
    case Method::kNaive:
    case Method::kStdThinning: {
      const auto centers = detail::project_poses(std::get<PoseSet>(msg.payload).poses, d);
      return detail::point_mixture(b, centers, model.sigma);
    }
    case Method::kCompressPP:
      return detail::point_mixture(b, std::get<CoresetPayload>(msg.payload).points, model.sigma);
    case Method::kKMeans: {
      const auto& cs = std::get<std::vector<GaussianCluster>>(msg.payload);
      std::vector<Gaussian2> comps;
      std::vector<double> w;
      for (const auto& c : cs) {
        if (!(c.weight > 0.0)) continue;
        Mat2 cov = c.cov + model.sigma;
        if (!(cov.det() > 0.0)) cov = floored(cov);
        comps.emplace_back(c.mean, cov);
        w.push_back(c.weight);
      }
      std::vector<double> out(b.size(), 0.0);
      for (std::size_t i = 0; i < b.size(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < comps.size(); ++k) acc += w[k] * comps[k](b.particles[i].pose.position());
        out[i] = acc;
      }
      return out;
    }
    case Method::kProrok: {
      const auto& cs = std::get<std::vector<ClusterAbstraction>>(msg.payload);
      const double vr = model.polar_var_range();
      const double vb = model.polar_var_bearing();
      std::vector<double> out(b.size(), 0.0);
      for (std::size_t i = 0; i < b.size(); ++i) {
        double acc = 0.0;
        for (const auto& c : cs) {
          if (!(c.weight > 0.0)) continue;
          const Detection rel = to_relative(b.particles[i].pose.position(), c.centroid);
          acc += c.weight * detail::polar_density(rel, c.detection_mean, c.var_range + vr, c.var_bearing + vb);
        }
        out[i] = acc;
      }
      return out;
    }
    case Method::kDet: {
      const auto& t = std::get<DensityTree>(msg.payload);
      std::vector<double> out(b.size());
      for (std::size_t i = 0; i < b.size(); ++i) out[i] = query_det(t, b.particles[i].pose.position());
      return out;
    }
  }
  return {};
}

/// Multiply each weight by (message likelihood + floor) and renormalize.
inline Belief fuse(Belief b, const BeliefSummary& msg, const DetectionModel& model) {
  const auto lik = message_likelihoods(b, msg, model);
  for (std::size_t i = 0; i < b.size(); ++i) b.particles[i].weight *= lik[i] + kLikelihoodFloor;
  if (!normalize(b)) set_uniform(b);
  return b;
}

inline Belief fuse(Belief b, const BeliefSummary& msg, const DetectionModel& model, const FusionStrategy& s) {
  if (msg.method != s.tag) {
    throw InvalidArgument("message method '" + std::string(method_name(msg.method)) + "' does not match strategy '" +
                          std::string(method_name(s.tag)) + "'");
  }
  return fuse(std::move(b), msg, model);
}

namespace detail {

inline Vec2 sample_gaussian(Vec2 mean, const Mat2& cov, Rng& rng) {
  const Mat2 c = cov.det() > 0.0 ? cov : floored(cov);
  const double l11 = std::sqrt(c.xx);
  const double l21 = c.xy / l11;
  const double l22 = std::sqrt(std::max(c.yy - l21 * l21, 0.0));
  std::normal_distribution<double> g(0.0, 1.0);
  const double z1 = g(rng);
  const double z2 = g(rng);
  return {mean.x + l11 * z1, mean.y + l21 * z1 + l22 * z2};
}

// Draws positions from the message's detection distribution.
class DetectionSampler {
 public:
  DetectionSampler(const BeliefSummary& msg, const DetectionModel& model) : msg_(msg), model_(model) {
    switch (msg.method) {
      case Method::kNaive:
      case Method::kStdThinning:
        centers_ = project_poses(std::get<PoseSet>(msg.payload).poses, msg.detection);
        break;
      case Method::kCompressPP:
        centers_ = std::get<CoresetPayload>(msg.payload).points;
        break;
      case Method::kKMeans: {
        std::vector<double> w;
        for (const auto& c : std::get<std::vector<GaussianCluster>>(msg.payload)) w.push_back(std::max(c.weight, 0.0));
        pick_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
        break;
      }
      case Method::kProrok: {
        std::vector<double> w;
        for (const auto& c : std::get<std::vector<ClusterAbstraction>>(msg.payload)) w.push_back(std::max(c.weight, 0.0));
        pick_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
        break;
      }
      case Method::kDet:
        throw InvalidArgument("reciprocal sampling is not defined for DET messages");
    }
  }

  Vec2 operator()(Rng& rng) {
    switch (msg_.method) {
      case Method::kNaive:
      case Method::kStdThinning:
      case Method::kCompressPP: {
        std::uniform_int_distribution<std::size_t> u(0, centers_.size() - 1);
        return sample_gaussian(centers_[u(rng)], model_.sigma, rng);
      }
      case Method::kKMeans: {
        const auto& c = std::get<std::vector<GaussianCluster>>(msg_.payload)[pick_(rng)];
        return sample_gaussian(c.mean, c.cov + model_.sigma, rng);
      }
      case Method::kProrok: {
        const auto& c = std::get<std::vector<ClusterAbstraction>>(msg_.payload)[pick_(rng)];
        std::normal_distribution<double> g(0.0, 1.0);
        const double r = c.detection_mean.range + std::sqrt(c.var_range + model_.polar_var_range()) * g(rng);
        const double b = c.detection_mean.bearing + std::sqrt(c.var_bearing + model_.polar_var_bearing()) * g(rng);
        return to_absolute(Detection{std::max(r, 0.0), b}, c.centroid);
      }
      case Method::kDet: break;
    }
    throw InvalidArgument("reciprocal sampling is not defined for DET messages");
  }

 private:
  const BeliefSummary& msg_;
  DetectionModel model_;
  std::vector<Vec2> centers_;
  std::discrete_distribution<std::size_t> pick_;
};

}  // namespace detail

struct ReciprocalResult {
  Belief belief;
  std::size_t injected = 0;
};

/// Resampling step with reciprocal sampling: every slot of a low-variance resample is, with
/// probability alpha, replaced by a pose drawn from the message's detection distribution
/// (uniform heading). All output weights are 1/N.
inline ReciprocalResult reciprocal_sample_counted(const Belief& b, const BeliefSummary& msg, const DetectionModel& model,
                                                  double alpha, Rng& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must be in [0, 1]");
  if (msg.method == Method::kDet) throw InvalidArgument("reciprocal sampling is not defined for DET messages");
  if (!payload_matches(msg.method, msg.payload)) throw InvalidArgument("payload does not match method tag");
  if (msg.count() == 0) throw InvalidArgument("empty summary payload");
  ReciprocalResult res{resample_low_variance(b, rng), 0};
  if (alpha > 0.0) {
    detail::DetectionSampler sampler(msg, model);
    std::bernoulli_distribution inject(alpha);
    std::uniform_real_distribution<double> heading(0.0, kTwoPi);
    for (auto& p : res.belief.particles) {
      if (!inject(rng)) continue;
      const Vec2 pos = sampler(rng);
      p.pose = make_pose(pos.x, pos.y, heading(rng));
      ++res.injected;
    }
  }
  return res;
}

inline Belief reciprocal_sample(const Belief& b, const BeliefSummary& msg, const DetectionModel& model, double alpha,
                                Rng& rng) {
  return reciprocal_sample_counted(b, msg, model, alpha, rng).belief;
}

/// True when every weight equals 1/N (up to rounding).
inline bool has_uniform_weights(const Belief& b) {
  const double w = 1.0 / static_cast<double>(b.size());
  return std::all_of(b.particles.begin(), b.particles.end(),
                     [w](const Particle& p) { return std::abs(p.weight - w) <= 1e-12 * std::max(1.0, w); });
}

/// Sender side: summarize `sender` for a detection `d` with one of the six methods. A belief
/// with unequal weights is low-variance resampled (on a copy) first. Scalars are rounded to wire
/// precision.
inline BeliefSummary summarize(const Belief& sender, const Detection& d, Method method, const CompressionConfig& cfg,
                               const KernelConfig& kcfg, Rng& rng, std::uint8_t sender_id = 0, std::uint32_t seq = 0) {
  if (sender.empty()) throw InvalidArgument("cannot summarize an empty belief");
  const Belief uniform = has_uniform_weights(sender) ? sender : resample_low_variance(sender, rng);
  BeliefSummary m;
  m.method = method;
  m.sender = sender_id;
  m.seq = seq;
  m.detection = d;
  switch (method) {
    case Method::kNaive: {
      PoseSet ps;
      for (const auto& p : uniform.particles) ps.poses.push_back(p.pose);
      m.payload = std::move(ps);
      break;
    }
    case Method::kStdThinning: {
      std::vector<Pose> poses;
      for (const auto& p : uniform.particles) poses.push_back(p.pose);
      const std::size_t k = std::min(cfg.thinning_k, poses.size());
      m.payload = PoseSet{sample_without_replacement<Pose>(poses, k, rng)};
      break;
    }
    case Method::kDet:
      m.payload = leaves_only(build_det(project_samples(uniform, d), cfg));
      break;
    case Method::kProrok:
      m.payload = dnc_cluster(uniform, d, std::min(cfg.k_clusters, uniform.size()));
      break;
    case Method::kKMeans:
      m.payload = kmeans_cluster(project_samples(uniform, d), std::min(cfg.k_clusters, uniform.size()),
                                 cfg.kmeans_iters, rng);
      break;
    case Method::kCompressPP:
      m.payload = CoresetPayload{compresspp(project_samples(uniform, d), cfg, kcfg, rng).points};
      break;
  }
  return quantize(std::move(m));
}

}  // namespace cmcl
