#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cmcl/fusion.hpp"
#include "cmcl/geometry.hpp"
#include "cmcl/grid.hpp"
#include "cmcl/kernel_thinning.hpp"
#include "cmcl/mcl.hpp"
#include "cmcl/planner.hpp"
#include "cmcl/util.hpp"
#include "cmcl/wire.hpp"

namespace cmcl {

struct LidarSpec {
  std::size_t n_beams = 667;
  double fov = kTwoPi;
  double r_max = 12.0;
  double rate = 6.0;
  double range_noise_sigma = 0.01;
};

struct CameraSpec {
  double fov = 102.0 * kPi / 180.0;
  double rate = 5.0;
  double max_range = 5.0;
};

struct SensorSpec {
  LidarSpec lidar;
  CameraSpec camera;
  double detection_range_scale = 0.05;
  double detection_bearing_sigma = 0.03;
  /// Odometry noise: std of dx, dy is odom_noise_xy * |t|; std of dtheta is
  /// odom_noise_theta * (|dtheta| + 0.1 |t|).
  double odom_noise_xy = 0.02;
  double odom_noise_theta = 0.02;
  bool noise_free = false;
};

inline void validate(const SensorSpec& s) {
  if (!(s.lidar.rate > 0) || !(s.camera.rate > 0)) throw InvalidArgument("sensor rates must be > 0");
  if (s.lidar.n_beams < 1 || !(s.lidar.r_max > 0) || !(s.lidar.fov > 0)) throw InvalidArgument("bad lidar spec");
  if (!(s.camera.fov > 0) || !(s.camera.max_range > 0)) throw InvalidArgument("bad camera spec");
  if (s.lidar.range_noise_sigma < 0 || s.odom_noise_xy < 0 || s.odom_noise_theta < 0 ||
      !(s.detection_range_scale > 0) || !(s.detection_bearing_sigma > 0)) {
    throw InvalidArgument("noise parameters must be >= 0 (detection noise > 0)");
  }
}

struct MotionSpec {
  double dt = 0.05;
  double speed = 0.4;
  double max_turn_rate = 1.5;
  double robot_radius = 0.16;
  /// B holds still at its start until A first sees it.
  bool b_waits_for_detection = true;
};

struct ScenarioSpec {
  double min_path_a = 4.0;
  double min_path_b = 4.0;
  double max_path_b = 12.0;
  double min_detection_range = 0.8;
  double max_detection_range = 4.0;
  double tail = 5.0;
  int max_attempts = 1000;
};

struct RobotPlan {
  Pose start;
  Pose goal;
  std::vector<Vec2> path;
  friend bool operator==(const RobotPlan&, const RobotPlan&) = default;
};

struct Scenario {
  std::string map_ref;
  std::uint64_t seed = 0;
  RobotPlan robot_a;
  RobotPlan robot_b;
  double duration = 0.0;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Beam bearings in the body frame, evenly spaced over the fov and centred on the heading.
inline std::vector<double> lidar_bearings(const LidarSpec& s) {
  std::vector<double> b(s.n_beams);
  const double step = s.fov / static_cast<double>(s.n_beams);
  const double first = s.fov >= kTwoPi ? 0.0 : -0.5 * s.fov + 0.5 * step;
  for (std::size_t k = 0; k < s.n_beams; ++k) b[k] = wrap_pi(first + step * static_cast<double>(k));
  return b;
}

/// Fires on the simulation tick nearest to each period of a sensor running at `rate`.
inline bool sensor_fires(std::size_t tick, double dt, double rate) {
  if (tick == 0) return false;
  const auto n = [&](std::size_t k) { return std::floor(static_cast<double>(k) * dt * rate + 0.5 + 1e-9); };
  return n(tick) > n(tick - 1);
}

/// Noise-free visibility: inside the camera cone, within range, unobstructed.
inline bool detectable(const Pose& a, const Pose& b, const OccupancyGrid& grid, const CameraSpec& cam) {
  const Detection rel = to_relative(b.position(), a);
  if (rel.range > cam.max_range || rel.range == 0.0) return false;
  if (std::abs(rel.bearing) > 0.5 * cam.fov) return false;
  return line_of_sight(grid, a.position(), b.position());
}

/// Camera-based detection of B by A: none outside the FoV or when occluded; otherwise a
/// relative observation with N(r, (scale r)^2) range and N(b, sigma^2) bearing noise.
inline std::optional<Detection> simulate_detection(const Pose& a, const Pose& b, const OccupancyGrid& grid,
                                                   const SensorSpec& spec, Rng& rng) {
  if (!detectable(a, b, grid, spec.camera)) return std::nullopt;
  const Detection rel = to_relative(b.position(), a);
  if (spec.noise_free) return rel;
  std::normal_distribution<double> g(0.0, 1.0);
  const double r = rel.range + spec.detection_range_scale * rel.range * g(rng);
  const double th = rel.bearing + spec.detection_bearing_sigma * g(rng);
  return Detection{std::max(r, 0.0), wrap_pi(th)};
}

inline std::vector<double> simulate_scan(const Pose& p, const OccupancyGrid& grid, const LidarSpec& spec,
                                         std::span<const double> bearings, bool noisy, Rng& rng) {
  std::vector<double> r(bearings.size());
  std::normal_distribution<double> g(0.0, spec.range_noise_sigma);
  for (std::size_t k = 0; k < bearings.size(); ++k) {
    double v = raycast(grid, p, bearings[k], spec.r_max);
    if (v < spec.r_max && noisy && spec.range_noise_sigma > 0) v = std::clamp(v + g(rng), 0.0, spec.r_max);
    // ranges travel as f32 like a real driver would publish them
    r[k] = static_cast<double>(static_cast<float>(v));
  }
  return r;
}

inline OdometryDelta noisy_odometry(const OdometryDelta& u, const SensorSpec& spec, Rng& rng) {
  if (spec.noise_free) return u;
  const double t = u.translation();
  std::normal_distribution<double> g(0.0, 1.0);
  const double sxy = spec.odom_noise_xy * t;
  const double sth = spec.odom_noise_theta * (std::abs(u.dtheta) + 0.1 * t);
  // draw all three even for zero motion so the stream position does not depend on the path
  const double n1 = g(rng), n2 = g(rng), n3 = g(rng);
  return {u.dx + sxy * n1, u.dy + sxy * n2, u.dtheta + sth * n3};
}

/// Waypoint follower: constant speed along the polyline; heading turns toward the direction of
/// travel at a bounded rate.
class WaypointFollower {
 public:
  WaypointFollower(Pose start, std::vector<Vec2> path, const MotionSpec& m)
      : pose_(start), path_(std::move(path)), m_(m) {
    while (next_ < path_.size() && path_[next_] == pose_.position()) ++next_;
  }

  const Pose& pose() const { return pose_; }
  bool done() const { return next_ >= path_.size(); }

  void step() {
    if (done()) return;
    const Vec2 from = pose_.position();
    Vec2 pos = from;
    double budget = m_.speed * m_.dt;
    while (budget > 0.0 && next_ < path_.size()) {
      const Vec2 d = path_[next_] - pos;
      const double len = d.norm();
      if (len <= budget) {
        pos = path_[next_];
        budget -= len;
        ++next_;
      } else {
        pos = pos + (budget / len) * d;
        budget = 0.0;
      }
    }
    double theta = pose_.theta;
    const Vec2 moved = pos - from;
    if (moved.norm() > 1e-12) {
      const double err = wrap_pi(std::atan2(moved.y, moved.x) - theta);
      const double lim = m_.max_turn_rate * m_.dt;
      theta += std::clamp(err, -lim, lim);
    }
    pose_ = make_pose(pos.x, pos.y, theta);
  }

 private:
  Pose pose_;
  std::vector<Vec2> path_;
  MotionSpec m_;
  std::size_t next_ = 0;
};

/// Noise-free trajectories of both robots, one pose per tick.
struct GroundTruth {
  std::vector<Pose> a;
  std::vector<Pose> b;
  std::vector<char> visible;  // camera tick with B detectable
  std::optional<std::size_t> first_detection_tick;
};

inline GroundTruth simulate_truth(const Scenario& sc, const OccupancyGrid& grid, const SensorSpec& spec,
                                  const MotionSpec& m) {
  const auto ticks = static_cast<std::size_t>(std::llround(sc.duration / m.dt));
  GroundTruth gt;
  gt.a.reserve(ticks + 1);
  gt.b.reserve(ticks + 1);
  gt.visible.assign(ticks + 1, 0);
  WaypointFollower fa(sc.robot_a.start, sc.robot_a.path, m);
  WaypointFollower fb(sc.robot_b.start, sc.robot_b.path, m);
  gt.a.push_back(fa.pose());
  gt.b.push_back(fb.pose());
  for (std::size_t k = 1; k <= ticks; ++k) {
    fa.step();
    if (!m.b_waits_for_detection || gt.first_detection_tick) fb.step();
    gt.a.push_back(fa.pose());
    gt.b.push_back(fb.pose());
    if (sensor_fires(k, m.dt, spec.camera.rate) && detectable(fa.pose(), fb.pose(), grid, spec.camera)) {
      gt.visible[k] = 1;
      if (!gt.first_detection_tick) gt.first_detection_tick = k;
    }
  }
  return gt;
}

inline double time_to_follow(const std::vector<Vec2>& path, const MotionSpec& m) {
  return path_length(path) / m.speed;
}

/// Random start and goal for A; B placed inside A's camera cone at a pose A passes; B's goal
/// random and reachable. Rejection sampling with a bounded number of attempts.
inline Scenario generate_scenario(const OccupancyGrid& grid, std::uint64_t seed, const SensorSpec& spec,
                                  const MotionSpec& m = {}, const ScenarioSpec& ss = {},
                                  const std::string& map_ref = "") {
  validate(spec);
  Rng rng = derive_rng(seed, 1);
  const Traversability tr(grid, m.robot_radius);
  std::vector<CellIndex> cells;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const CellIndex c = grid.cell_of_index(i);
    if (tr.clear(c)) cells.push_back(c);
  }
  if (cells.size() < 2) throw ScenarioError("map has no room for two robots");
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto random_point = [&] { return grid.cell_center(cells[pick(rng)]); };
  const auto heading_of = [](const std::vector<Vec2>& p) {
    if (p.size() < 2) return 0.0;
    const Vec2 d = p[1] - p[0];
    return std::atan2(d.y, d.x);
  };
  const auto end_heading = [](const std::vector<Vec2>& p) {
    if (p.size() < 2) return 0.0;
    const Vec2 d = p.back() - p[p.size() - 2];
    return std::atan2(d.y, d.x);
  };

  for (int attempt = 0; attempt < ss.max_attempts; ++attempt) {
    const Vec2 a0 = random_point();
    const Vec2 a1 = random_point();
    std::vector<Vec2> pa;
    try {
      pa = plan_path(tr, a0, a1);
    } catch (const PlanningError&) {
      continue;
    }
    if (path_length(pa) < ss.min_path_a) continue;

    Scenario sc;
    sc.map_ref = map_ref;
    sc.seed = seed;
    sc.robot_a = {make_pose(a0.x, a0.y, heading_of(pa)), make_pose(a1.x, a1.y, end_heading(pa)), pa};

    // poses A actually passes through
    std::vector<Pose> traj;
    {
      WaypointFollower f(sc.robot_a.start, pa, m);
      for (std::size_t k = 0; k < 100000 && !f.done(); ++k) {
        f.step();
        traj.push_back(f.pose());
      }
    }
    if (traj.empty()) continue;
    std::uniform_int_distribution<std::size_t> when(0, traj.size() * 7 / 10);
    const Pose seen_from = traj[when(rng)];
    const double rr = ss.min_detection_range +
                      (std::min(ss.max_detection_range, spec.camera.max_range) - ss.min_detection_range) * unit(rng);
    const double bb = (unit(rng) - 0.5) * 0.8 * spec.camera.fov;
    const Vec2 b0 = to_absolute(Detection{rr, bb}, seen_from);
    if (!tr.clear(b0) || !line_of_sight(grid, seen_from.position(), b0)) continue;
    const Vec2 b1 = random_point();
    std::vector<Vec2> pb;
    try {
      pb = plan_path(tr, b0, b1);
    } catch (const PlanningError&) {
      continue;
    }
    const double lb = path_length(pb);
    if (lb < ss.min_path_b || lb > ss.max_path_b) continue;
    sc.robot_b = {make_pose(b0.x, b0.y, kTwoPi * unit(rng)), make_pose(b1.x, b1.y, end_heading(pb)), pb};

    // duration long enough to see B and let it finish its path
    sc.duration = static_cast<double>(traj.size()) * m.dt + time_to_follow(pb, m) + ss.tail;
    const GroundTruth gt = simulate_truth(sc, grid, spec, m);
    if (!gt.first_detection_tick) continue;
    const double t0 = static_cast<double>(*gt.first_detection_tick) * m.dt;
    sc.duration = std::ceil((t0 + time_to_follow(pb, m) + 2.0 * kPi / m.max_turn_rate + ss.tail) / m.dt) * m.dt;
    return sc;
  }
  throw ScenarioError("scenario generation failed after " + std::to_string(ss.max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------------------------
// Run logs

struct DetectionEvent {
  Detection truth;
  Detection measured;
  friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

struct MessageEvent {
  std::uint32_t seq = 0;
  std::string bytes;
  std::size_t payload_bytes = 0;
  std::size_t injected = 0;
  /// Wall-clock timings; excluded from equality and digests.
  double compress_ms = 0.0;
  double fuse_ms = 0.0;
  friend bool operator==(const MessageEvent& x, const MessageEvent& y) {
    return x.seq == y.seq && x.bytes == y.bytes && x.payload_bytes == y.payload_bytes && x.injected == y.injected;
  }
};

struct TickRecord {
  double t = 0.0;
  Pose gt_a;
  Pose gt_b;
  OdometryDelta odo_a;
  OdometryDelta odo_b;
  std::vector<double> scan_a;  // empty when the LiDAR did not fire
  std::vector<double> scan_b;
  std::optional<DetectionEvent> detection;
  std::optional<Pose> est_a;
  std::optional<Pose> est_b;
  std::optional<MessageEvent> message;
  friend bool operator==(const TickRecord&, const TickRecord&) = default;
};

/// B's belief around one fusion step: before fusion and right after it (before resampling).
struct BeliefSnapshot {
  std::size_t tick = 0;
  std::uint32_t seq = 0;
  Belief before;
  Belief after_fusion;
  friend bool operator==(const BeliefSnapshot&, const BeliefSnapshot&) = default;
};

inline constexpr int kRunLogSchema = 1;

struct RunHeader {
  int schema = kRunLogSchema;
  Scenario scenario;
  std::uint64_t seed = 0;
  /// "record" for sensor logs, "mcl" for the plain filter, otherwise a method name.
  std::string strategy = "record";
  double alpha = 0.0;
  std::size_t n_particles = 0;
  double dt = 0.05;
  double first_detection_time = -1.0;
  std::vector<double> lidar_bearings;
  double lidar_r_max = 12.0;
  friend bool operator==(const RunHeader&, const RunHeader&) = default;
};

struct RunLog {
  RunHeader header;
  std::vector<TickRecord> ticks;
  std::vector<BeliefSnapshot> snapshots;
  friend bool operator==(const RunLog&, const RunLog&) = default;
};

/// Sensor streams plus ground truth; strategy-agnostic.
inline RunLog record(const Scenario& sc, const OccupancyGrid& grid, const SensorSpec& spec, const MotionSpec& m,
                     std::uint64_t seed) {
  validate(spec);
  const GroundTruth gt = simulate_truth(sc, grid, spec, m);
  Rng odo_rng = derive_rng(seed, 101);
  Rng lidar_rng = derive_rng(seed, 102);
  Rng det_rng = derive_rng(seed, 103);
  const Traversability tr(grid, m.robot_radius);

  RunLog log;
  log.header.scenario = sc;
  log.header.seed = seed;
  log.header.dt = m.dt;
  log.header.lidar_bearings = lidar_bearings(spec.lidar);
  log.header.lidar_r_max = spec.lidar.r_max;
  if (gt.first_detection_tick) log.header.first_detection_time = static_cast<double>(*gt.first_detection_tick) * m.dt;

  log.ticks.reserve(gt.a.size());
  for (std::size_t k = 0; k < gt.a.size(); ++k) {
    for (const Pose& p : {gt.a[k], gt.b[k]}) {
      if (tr.distance().at_world(p.position()) < m.robot_radius) {
        throw ScenarioError("ground truth enters an obstacle at tick " + std::to_string(k));
      }
    }
    TickRecord r;
    r.t = static_cast<double>(k) * m.dt;
    r.gt_a = gt.a[k];
    r.gt_b = gt.b[k];
    if (k > 0) {
      r.odo_a = noisy_odometry(between(gt.a[k - 1], gt.a[k]), spec, odo_rng);
      r.odo_b = noisy_odometry(between(gt.b[k - 1], gt.b[k]), spec, odo_rng);
      if (sensor_fires(k, m.dt, spec.lidar.rate)) {
        r.scan_a = simulate_scan(gt.a[k], grid, spec.lidar, log.header.lidar_bearings, !spec.noise_free, lidar_rng);
        r.scan_b = simulate_scan(gt.b[k], grid, spec.lidar, log.header.lidar_bearings, !spec.noise_free, lidar_rng);
      }
      if (gt.visible[k]) {
        const auto d = simulate_detection(gt.a[k], gt.b[k], grid, spec, det_rng);
        r.detection = DetectionEvent{to_relative(gt.b[k].position(), gt.a[k]), *d};
      }
    }
    log.ticks.push_back(std::move(r));
  }
  return log;
}

struct RunConfig {
  MclConfig mcl;
  CompressionConfig compression;
  KernelConfig kernel;
  /// Initial spread of A's belief around its true start.
  double init_sigma_xy = 0.1;
  double init_sigma_theta = 0.05;
  std::size_t snapshot_messages = 1;
  bool keep_scans = false;
};

/// Strategy to replay; an empty optional is the plain filter that ignores detections.
using StrategyChoice = std::optional<FusionStrategy>;

inline std::string strategy_label(const StrategyChoice& s) {
  if (!s) return "mcl";
  return std::string(method_name(s->tag));
}

/// Replays a recorded sensor log with both filters and the belief exchange of one strategy.
inline RunLog replay(const RunLog& rec, const OccupancyGrid& grid, const StrategyChoice& strategy,
                     const RunConfig& cfg, std::uint64_t seed) {
  validate(cfg.mcl);
  validate(cfg.compression);
  const DistanceField df(grid);
  const Scenario& sc = rec.header.scenario;
  const std::size_t n = cfg.mcl.n_particles;
  Rng init_a = derive_rng(seed, 10);
  Rng init_b = derive_rng(seed, 20);
  MclFilter fa(init_gaussian(sc.robot_a.start, cfg.init_sigma_xy, cfg.init_sigma_theta, n, init_a), cfg.mcl,
               derive_rng(seed, 11));
  MclFilter fb(init_uniform(grid, n, init_b), cfg.mcl, derive_rng(seed, 21));
  Rng compress_rng = derive_rng(seed, 30);
  Rng fusion_rng = derive_rng(seed, 31);

  RunLog out;
  out.header = rec.header;
  out.header.seed = seed;
  out.header.strategy = strategy_label(strategy);
  out.header.alpha = strategy ? strategy->alpha : 0.0;
  out.header.n_particles = n;

  Scan scan;
  scan.bearings = rec.header.lidar_bearings;
  scan.r_max = rec.header.lidar_r_max;
  std::uint32_t seq = 0;
  using Clock = std::chrono::steady_clock;
  const auto ms_since = [](Clock::time_point t) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
  };

  out.ticks.reserve(rec.ticks.size());
  for (std::size_t k = 0; k < rec.ticks.size(); ++k) {
    const TickRecord& in = rec.ticks[k];
    TickRecord r;
    r.t = in.t;
    r.gt_a = in.gt_a;
    r.gt_b = in.gt_b;
    r.odo_a = in.odo_a;
    r.odo_b = in.odo_b;
    r.detection = in.detection;
    fa.add_odometry(in.odo_a);
    fb.add_odometry(in.odo_b);
    if (!in.scan_a.empty()) {
      scan.ranges = in.scan_a;
      fa.on_scan(scan, df);
      scan.ranges = in.scan_b;
      fb.on_scan(scan, df);
      if (cfg.keep_scans) {
        r.scan_a = in.scan_a;
        r.scan_b = in.scan_b;
      }
    }
    if (in.detection && strategy) {
      fa.flush_motion();
      fb.flush_motion();
      MessageEvent ev;
      ev.seq = seq++;
      auto t_start = Clock::now();
      const BeliefSummary msg = summarize(fa.belief(), in.detection->measured, strategy->tag, cfg.compression,
                                          cfg.kernel, compress_rng, 0, ev.seq);
      ev.bytes = encode(msg);
      ev.compress_ms = ms_since(t_start);
      ev.payload_bytes = payload_bytes(msg);

      t_start = Clock::now();
      const BeliefSummary rx = decode(ev.bytes);
      const DetectionModel model = DetectionModel::for_detection(rx.detection);
      Belief fused = fuse(fb.belief(), rx, model, *strategy);
      if (out.snapshots.size() < cfg.snapshot_messages) out.snapshots.push_back({k, ev.seq, fb.belief(), fused});
      if (strategy->tag == Method::kDet) {
        fb.set_belief(std::move(fused));
        fb.maybe_resample();
      } else {
        auto res = reciprocal_sample_counted(fused, rx, model, strategy->alpha, fusion_rng);
        ev.injected = res.injected;
        fb.set_belief(std::move(res.belief));
      }
      ev.fuse_ms = ms_since(t_start);
      r.message = std::move(ev);
    }
    r.est_a = fa.estimate();
    r.est_b = fb.estimate();
    out.ticks.push_back(std::move(r));
  }
  return out;
}

/// Record then replay in one call.
inline RunLog run(const Scenario& sc, const OccupancyGrid& grid, const StrategyChoice& strategy, const SensorSpec& spec,
                  const MotionSpec& m, const RunConfig& cfg, std::uint64_t seed) {
  return replay(record(sc, grid, spec, m, seed), grid, strategy, cfg, seed);
}

}  // namespace cmcl
