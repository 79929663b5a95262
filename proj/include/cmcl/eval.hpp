#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cmcl/fusion.hpp"
#include "cmcl/sim.hpp"
#include "cmcl/util.hpp"
#include "cmcl/wire.hpp"

namespace cmcl {

struct MetricConfig {
  double pos_threshold = 0.3;
  double ang_threshold = 0.3;
  double divergence_budget = 0.05;
  double convergence_window = 0.9;
};

inline void validate(const MetricConfig& c) {
  if (!(c.pos_threshold > 0) || !(c.ang_threshold > 0)) throw InvalidArgument("thresholds must be > 0");
  if (!(c.divergence_budget > 0 && c.divergence_budget < 1) || !(c.convergence_window > 0 && c.convergence_window < 1)) {
    throw InvalidArgument("fractions must lie in (0, 1)");
  }
}

/// One estimate of the tracked robot against ground truth.
struct TrackSample {
  double t = 0.0;
  Pose truth;
  Pose estimate;
};

/// Tracking error samples for one robot on a time axis that starts at `origin`.
struct Track {
  std::vector<TrackSample> samples;
  /// End of the sequence; samples cover [0, duration].
  double duration = 0.0;
};

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// B's track from a replayed log, re-based so t = 0 is the first detection (first message).
inline Track track_b(const RunLog& log) {
  if (log.header.first_detection_time < 0) throw MetricError("run log has no detection event");
  const double t0 = log.header.first_detection_time;
  Track tr;
  for (const auto& r : log.ticks) {
    if (r.t + 1e-9 < t0) continue;
    if (!r.est_b) throw MetricError("run log has no estimates for robot B");
    tr.samples.push_back({r.t - t0, r.gt_b, *r.est_b});
  }
  if (tr.samples.empty()) throw MetricError("run log has no samples after the first detection");
  tr.duration = tr.samples.back().t;
  return tr;
}

inline double position_error(const TrackSample& s) { return distance(s.truth.position(), s.estimate.position()); }
inline double angular_error(const TrackSample& s) { return angular_distance(s.truth.theta, s.estimate.theta); }

inline bool within(const TrackSample& s, const MetricConfig& c) {
  return position_error(s) < c.pos_threshold && angular_error(s) < c.ang_threshold;
}

/// Time covered by sample i: the gap to the next sample (the last sample reuses the previous gap).
inline double sample_span(const Track& tr, std::size_t i) {
  const auto& s = tr.samples;
  if (s.size() < 2) return 0.0;
  if (i + 1 < s.size()) return s[i + 1].t - s[i].t;
  return s[i].t - s[i - 1].t;
}

inline std::optional<std::size_t> convergence_index(const Track& tr, const MetricConfig& c) {
  if (tr.samples.empty()) throw MetricError("empty track");
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    if (within(tr.samples[i], c)) return i;
  }
  return std::nullopt;
}

inline std::optional<double> convergence_time(const Track& tr, const MetricConfig& c) {
  const auto i = convergence_index(tr, c);
  if (!i) return std::nullopt;
  return tr.samples[*i].t;
}

/// Time spent outside the thresholds after convergence.
inline double diverged_time(const Track& tr, const MetricConfig& c, std::size_t from) {
  double acc = 0.0;
  for (std::size_t i = from; i < tr.samples.size(); ++i) {
    if (!within(tr.samples[i], c)) acc += sample_span(tr, i);
  }
  return acc;
}

inline bool success(const Track& tr, const MetricConfig& c) {
  const auto i = convergence_index(tr, c);
  if (!i) return false;
  const double tc = tr.samples[*i].t;
  if (tc > c.convergence_window * tr.duration) return false;
  const double remaining = tr.duration - tc;
  return diverged_time(tr, c, *i) < c.divergence_budget * remaining;
}

struct Ate {
  double rot = 0.0;
  double trans = 0.0;
};

/// Mean absolute angular and mean Euclidean position error over the post-convergence samples.
inline Ate ate(const Track& tr, const MetricConfig& c) {
  const auto i = convergence_index(tr, c);
  if (!i) throw MetricError("ATE requested for a run that never converged");
  CompensatedSum rot, trans;
  for (std::size_t k = *i; k < tr.samples.size(); ++k) {
    rot.add(angular_error(tr.samples[k]));
    trans.add(position_error(tr.samples[k]));
  }
  const double n = static_cast<double>(tr.samples.size() - *i);
  return {rot.value() / n, trans.value() / n};
}

struct RunSummary {
  std::string strategy;
  double alpha = 0.0;
  std::uint64_t scenario_seed = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  std::optional<double> convergence_time;
  bool success = false;
  std::optional<Ate> ate;
  std::size_t messages = 0;
  std::size_t bytes_sent = 0;
  double compression_ms = 0.0;  // median per message
  double fusion_ms = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

inline RunSummary summarize_run(const RunLog& log, const MetricConfig& c) {
  validate(c);
  const Track tr = track_b(log);
  RunSummary s;
  s.strategy = log.header.strategy;
  s.alpha = log.header.alpha;
  s.scenario_seed = log.header.scenario.seed;
  s.seed = log.header.seed;
  s.convergence_time = convergence_time(tr, c);
  s.converged = s.convergence_time.has_value();
  s.success = success(tr, c);
  if (s.converged) s.ate = ate(tr, c);
  std::vector<double> cms, fms;
  for (const auto& r : log.ticks) {
    if (!r.message) continue;
    ++s.messages;
    s.bytes_sent += r.message->payload_bytes;
    cms.push_back(r.message->compress_ms);
    fms.push_back(r.message->fuse_ms);
  }
  s.compression_ms = median(cms);
  s.fusion_ms = median(fms);
  return s;
}

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Mean with a percentile bootstrap 95% interval.
inline Interval bootstrap_mean(const std::vector<double>& v, std::size_t resamples, Rng& rng) {
  if (v.empty()) return {};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  std::vector<double> means;
  means.reserve(resamples);
  std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
  for (std::size_t b = 0; b < resamples; ++b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += v[pick(rng)];
    means.push_back(acc / n);
  }
  std::sort(means.begin(), means.end());
  const auto q = [&](double p) {
    const auto idx = static_cast<std::size_t>(std::floor(p * static_cast<double>(means.size() - 1)));
    return means[idx];
  };
  return {mean, q(0.025), q(0.975)};
}

struct StrategyAggregate {
  std::string strategy;
  double alpha = 0.0;
  std::size_t runs = 0;
  Interval success_rate;
  Interval convergence_time;  // successful runs only
  Interval ate_rot;
  Interval ate_trans;
  double mean_bytes_per_message = 0.0;
};

inline std::vector<StrategyAggregate> aggregate(const std::vector<RunSummary>& runs, std::uint64_t seed = 0,
                                                std::size_t resamples = 1000) {
  std::vector<std::pair<std::string, double>> keys;
  for (const auto& r : runs) {
    const std::pair<std::string, double> k{r.strategy, r.alpha};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  std::vector<StrategyAggregate> out;
  Rng rng = derive_rng(seed, 77);
  for (const auto& [name, alpha] : keys) {
    StrategyAggregate a;
    a.strategy = name;
    a.alpha = alpha;
    std::vector<double> succ, conv, rot, trans;
    std::size_t msgs = 0, bytes = 0;
    for (const auto& r : runs) {
      if (r.strategy != name || r.alpha != alpha) continue;
      ++a.runs;
      succ.push_back(r.success ? 1.0 : 0.0);
      if (r.success) {
        conv.push_back(*r.convergence_time);
        rot.push_back(r.ate->rot);
        trans.push_back(r.ate->trans);
      }
      msgs += r.messages;
      bytes += r.bytes_sent;
    }
    a.success_rate = bootstrap_mean(succ, resamples, rng);
    a.convergence_time = bootstrap_mean(conv, resamples, rng);
    a.ate_rot = bootstrap_mean(rot, resamples, rng);
    a.ate_trans = bootstrap_mean(trans, resamples, rng);
    a.mean_bytes_per_message = msgs ? static_cast<double>(bytes) / static_cast<double>(msgs) : 0.0;
    out.push_back(a);
  }
  return out;
}

/// Fraction of runs within the thresholds at each time step (time axis from the first detection).
inline std::vector<std::pair<double, double>> converged_fraction(const std::vector<Track>& tracks,
                                                                  const MetricConfig& c, double step) {
  double horizon = 0.0;
  for (const auto& t : tracks) horizon = std::max(horizon, t.duration);
  std::vector<std::pair<double, double>> out;
  if (tracks.empty()) return out;
  for (double t = 0.0; t <= horizon + 1e-9; t += step) {
    std::size_t ok = 0;
    for (const auto& tr : tracks) {
      auto it = std::lower_bound(tr.samples.begin(), tr.samples.end(), t - 1e-9,
                                 [](const TrackSample& s, double v) { return s.t < v; });
      if (it == tr.samples.end()) it = std::prev(tr.samples.end());
      if (within(*it, c)) ++ok;
    }
    out.emplace_back(t, static_cast<double>(ok) / static_cast<double>(tracks.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Benchmark

struct BenchRow {
  std::string strategy;
  std::size_t n = 0;
  double compression_ms = 0.0;
  double fusion_ms = 0.0;
  std::size_t bytes = 0;
};

/// Sender and receiver beliefs for a benchmark step: N particles spread over a 10 m x 10 m square.
inline std::pair<Belief, Belief> benchmark_beliefs(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0), th(0.0, kTwoPi);
  Belief a, b;
  for (std::size_t i = 0; i < n; ++i) {
    a.particles.push_back({make_pose(u(rng), u(rng), th(rng)), 1.0 / static_cast<double>(n)});
    b.particles.push_back({make_pose(u(rng), u(rng), th(rng)), 1.0 / static_cast<double>(n)});
  }
  return {a, b};
}

/// Median wall-clock time of compression (sender) and fusion (receiver, fusion plus resampling)
/// for one detection, after one warmup repeat.
inline BenchRow benchmark_step(Method method, std::size_t n, std::size_t repeats, std::uint64_t seed,
                               const CompressionConfig& cc = {}, const KernelConfig& kc = {}) {
  if (repeats < 1) throw InvalidArgument("repeats must be >= 1");
  Rng rng = derive_rng(seed, n);
  const auto [sender, receiver] = benchmark_beliefs(n, rng);
  const Detection d{2.0, 0.3};
  const FusionStrategy strategy(method, 0.06);
  const DetectionModel model = DetectionModel::for_detection(d);
  using Clock = std::chrono::steady_clock;
  std::vector<double> c_ms, f_ms;
  BenchRow row{std::string(method_name(method)), n, 0.0, 0.0, 0};
  for (std::size_t r = 0; r <= repeats; ++r) {
    auto t = Clock::now();
    const BeliefSummary msg = summarize(sender, d, method, cc, kc, rng);
    const double cm = std::chrono::duration<double, std::milli>(Clock::now() - t).count();
    t = Clock::now();
    Belief fused = fuse(receiver, msg, model, strategy);
    if (method != Method::kDet) fused = reciprocal_sample(fused, msg, model, strategy.alpha, rng);
    const double fm = std::chrono::duration<double, std::milli>(Clock::now() - t).count();
    if (fused.empty()) throw std::logic_error("fusion produced an empty belief");
    row.bytes = payload_bytes(msg);
    if (r == 0) continue;  // warmup
    c_ms.push_back(cm);
    f_ms.push_back(fm);
  }
  row.compression_ms = median(c_ms);
  row.fusion_ms = median(f_ms);
  return row;
}

inline std::vector<BenchRow> benchmark(const std::vector<Method>& methods, const std::vector<std::size_t>& ns,
                                       std::size_t repeats, std::uint64_t seed = 1) {
  std::vector<BenchRow> out;
  for (Method m : methods) {
    for (std::size_t n : ns) out.push_back(benchmark_step(m, n, repeats, seed));
  }
  return out;
}

}  // namespace cmcl
