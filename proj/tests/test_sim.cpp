#include <gtest/gtest.h>

#include <cmath>
#include <queue>

#include "cmcl/eval.hpp"
#include "cmcl/maps.hpp"
#include "cmcl/runlog.hpp"
#include "cmcl/sim.hpp"

using namespace cmcl;

namespace {

OccupancyGrid open_map(int w, int h, double res = 0.05) {
  OccupancyGrid g(w, h, res);
  fill(g, {0, 0, w - 1, h - 1}, CellState::kFree);
  return g;
}

// Exact clearance from a point to the nearest blocking cell (as a square), brute force nearby.
double clearance(const OccupancyGrid& g, Vec2 p, double horizon) {
  const CellIndex c = g.world_to_cell(p);
  const int k = static_cast<int>(std::ceil(horizon / g.resolution())) + 1;
  double best = horizon;
  for (int iy = c.iy - k; iy <= c.iy + k; ++iy) {
    for (int ix = c.ix - k; ix <= c.ix + k; ++ix) {
      if (!g.is_blocking(CellIndex{ix, iy})) continue;
      const double x0 = ix * g.resolution(), x1 = x0 + g.resolution();
      const double y0 = iy * g.resolution(), y1 = y0 + g.resolution();
      const double dx = std::max({x0 - p.x, 0.0, p.x - x1});
      const double dy = std::max({y0 - p.y, 0.0, p.y - y1});
      best = std::min(best, std::hypot(dx, dy));
    }
  }
  return best;
}

// Dijkstra over the same traversable cells, as an optimality oracle for A*.
double dijkstra_cost(const Traversability& tr, CellIndex s, CellIndex t) {
  const auto& g = tr.grid();
  std::vector<double> d(g.size(), 1e300);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> q;
  d[g.index(s)] = 0;
  q.push({0, g.index(s)});
  while (!q.empty()) {
    auto [c, i] = q.top();
    q.pop();
    if (c > d[i]) continue;
    const CellIndex ci = g.cell_of_index(i);
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        if (!dx && !dy) continue;
        const CellIndex n{ci.ix + dx, ci.iy + dy};
        if (!tr.clear(n)) continue;
        if (dx && dy && (!tr.clear(CellIndex{ci.ix + dx, ci.iy}) || !tr.clear(CellIndex{ci.ix, ci.iy + dy}))) continue;
        const double nc = c + ((dx && dy) ? std::sqrt(2.0) : 1.0);
        if (nc < d[g.index(n)]) {
          d[g.index(n)] = nc;
          q.push({nc, g.index(n)});
        }
      }
    }
  }
  return d[g.index(t)];
}

RunConfig small_run(std::size_t n = 400) {
  RunConfig rc;
  rc.mcl.n_particles = n;
  return rc;
}

const OccupancyGrid& sym() {
  static const OccupancyGrid g = symmetric_two_room_map();
  return g;
}

}  // namespace

TEST(Planner, StartEqualsGoal) {
  const auto g = open_map(100, 100);
  const auto p = plan_path(g, make_pose(2, 2, 0), make_pose(2, 2, 1));
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], (Vec2{2, 2}));
}

TEST(Planner, OpenMapDiagonal) {
  const auto g = open_map(200, 200);
  const auto p = plan_path(g, make_pose(1, 1, 0), make_pose(9, 9, 0));
  EXPECT_NEAR(path_length(p), 8 * std::sqrt(2.0), 0.05 * std::sqrt(2.0));
  EXPECT_EQ(p.front(), (Vec2{1, 1}));
  EXPECT_EQ(p.back(), (Vec2{9, 9}));
}

TEST(Planner, WalledOffGoal) {
  auto g = open_map(100, 100);
  fill(g, {60, 60, 99, 62}, CellState::kOccupied);
  fill(g, {60, 60, 62, 99}, CellState::kOccupied);
  EXPECT_THROW(plan_path(g, make_pose(1, 1, 0), make_pose(4.5, 4.5, 0)), PlanningError);
  EXPECT_THROW(plan_path(g, make_pose(3.05, 3.05, 0), make_pose(1, 1, 0)), PlanningError);  // start in a wall
}

TEST(Planner, AStarCostMatchesDijkstra) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = open_map(80, 80);
    std::uniform_int_distribution<int> u(0, 75);
    for (int k = 0; k < 12; ++k) {
      const int x = u(rng), y = u(rng);
      fill(g, {x, y, x + 4, y + 4}, CellState::kOccupied);
    }
    const Traversability tr(g, 0.1);
    std::vector<CellIndex> free;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (tr.clear(g.cell_of_index(i))) free.push_back(g.cell_of_index(i));
    }
    std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
    const CellIndex s = free[pick(rng)], t = free[pick(rng)];
    const double oracle = dijkstra_cost(tr, s, t);
    if (oracle > 1e299) {
      EXPECT_THROW(detail::astar_cells(tr, s, t), PlanningError);
      continue;
    }
    const auto cells = detail::astar_cells(tr, s, t);
    double cost = 0;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      const int dx = std::abs(cells[i].ix - cells[i - 1].ix), dy = std::abs(cells[i].iy - cells[i - 1].iy);
      ASSERT_LE(std::max(dx, dy), 1);
      cost += (dx && dy) ? std::sqrt(2.0) : 1.0;
    }
    EXPECT_NEAR(cost, oracle, 1e-9) << "trial " << trial;
  }
}

TEST(Planner, SimplifiedPathKeepsClearance) {
  const Traversability tr(sym(), 0.16);
  const auto p = plan_path(tr, {0.5, 0.5}, {8.7, 4.1});
  ASSERT_GE(p.size(), 2u);
  for (std::size_t i = 1; i < p.size(); ++i) EXPECT_TRUE(tr.segment_clear(p[i - 1], p[i]));
  for (std::size_t i = 1; i < p.size(); ++i) {
    const Vec2 d = p[i] - p[i - 1];
    for (int k = 0; k <= 20; ++k) EXPECT_GE(clearance(sym(), p[i - 1] + (k / 20.0) * d, 1.0), 0.16);
  }
}

TEST(Maps, SymmetricMapIsPointSymmetric) {
  const auto& g = sym();
  for (int iy = 0; iy < g.height(); ++iy) {
    for (int ix = 0; ix < g.width(); ++ix) {
      ASSERT_EQ(g.at(ix, iy), g.at(g.width() - 1 - ix, g.height() - 1 - iy)) << ix << "," << iy;
    }
  }
  EXPECT_GT(g.free_area(), 30.0);
  EXPECT_LT(g.free_area(), 45.0);
}

TEST(Maps, BundledFilesMatchBuilders) {
  for (const auto& m : bundled_maps()) {
    const auto g = load_grid_file(std::string(CMCL_DATA_DIR) + "/maps/" + m.file);
    EXPECT_EQ(to_document(g), to_document(m.build())) << m.name;
  }
}

TEST(Detection, BehindIsInvisible) {
  const auto g = open_map(200, 200);
  Rng rng(1);
  SensorSpec s;
  EXPECT_FALSE(simulate_detection(make_pose(5, 5, 0), make_pose(3, 5, 0), g, s, rng));
}

TEST(Detection, NoiseFreeExact) {
  const auto g = open_map(200, 200);
  Rng rng(1);
  SensorSpec s;
  s.noise_free = true;
  const auto d = simulate_detection(make_pose(3, 5, 0), make_pose(5, 5, 1), g, s, rng);
  ASSERT_TRUE(d);
  EXPECT_DOUBLE_EQ(d->range, 2.0);
  EXPECT_DOUBLE_EQ(d->bearing, 0.0);
}

TEST(Detection, OccludedIsInvisible) {
  auto g = open_map(200, 200);
  fill(g, {80, 90, 82, 110}, CellState::kOccupied);
  Rng rng(1);
  SensorSpec s;
  EXPECT_FALSE(simulate_detection(make_pose(3, 5, 0), make_pose(5, 5, 0), g, s, rng));
}

TEST(Detection, RangeNoiseStatistics) {
  const auto g = open_map(200, 200);
  Rng rng(2);
  SensorSpec s;
  double sum = 0, sq = 0, bs = 0, bsq = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto d = simulate_detection(make_pose(3, 5, 0), make_pose(7, 5, 0), g, s, rng);
    ASSERT_TRUE(d);
    sum += d->range;
    sq += d->range * d->range;
    bs += d->bearing;
    bsq += d->bearing * d->bearing;
  }
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  const double bsd = std::sqrt(bsq / n - (bs / n) * (bs / n));
  EXPECT_NEAR(sd, 0.2, 0.02);
  EXPECT_NEAR(bsd, 0.03, 0.003);
}

TEST(Sensors, LidarScheduleAveragesRate) {
  int lidar = 0, cam = 0;
  for (std::size_t k = 1; k <= 1200; ++k) {
    lidar += sensor_fires(k, 0.05, 6.0);
    cam += sensor_fires(k, 0.05, 5.0);
  }
  EXPECT_EQ(lidar, 360);
  EXPECT_EQ(cam, 300);
}

TEST(Sensors, NoiseFreeScanMatchesRaycast) {
  const auto& g = sym();
  SensorSpec s;
  Rng rng(3);
  const auto b = lidar_bearings(s.lidar);
  const Pose p = make_pose(2.0, 2.0, 0.3);
  const auto r = simulate_scan(p, g, s.lidar, b, false, rng);
  ASSERT_EQ(r.size(), 667u);
  for (std::size_t k = 0; k < r.size(); k += 37) {
    EXPECT_EQ(r[k], static_cast<double>(static_cast<float>(raycast(g, p, b[k], 12.0))));
  }
}

TEST(Kinematics, FollowerReachesGoalAtSpeed) {
  MotionSpec m;
  WaypointFollower f(make_pose(0, 0, 0), {{0, 0}, {2, 0}, {2, 1}}, m);
  int ticks = 0;
  while (!f.done() && ticks < 1000) {
    f.step();
    ++ticks;
  }
  EXPECT_EQ(ticks, static_cast<int>(std::ceil(3.0 / (0.4 * 0.05) - 1e-9)));
  EXPECT_NEAR(f.pose().x, 2.0, 1e-12);
  EXPECT_NEAR(f.pose().y, 1.0, 1e-12);
}

TEST(Scenario, Deterministic) {
  SensorSpec s;
  const auto a = generate_scenario(sym(), 7, s);
  const auto b = generate_scenario(sym(), 7, s);
  EXPECT_EQ(a, b);
  EXPECT_EQ(scenario_document(a), scenario_document(b));
  EXPECT_EQ(parse_scenario(scenario_document(a)), a);
  EXPECT_NE(generate_scenario(sym(), 8, s), a);
}

TEST(Scenario, BStartVisibleFromAPath) {
  SensorSpec s;
  MotionSpec m;
  const Traversability tr(sym(), m.robot_radius);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto sc = generate_scenario(sym(), seed, s);
    for (const auto& w : sc.robot_a.path) EXPECT_TRUE(tr.clear(w));
    for (const auto& w : sc.robot_b.path) EXPECT_TRUE(tr.clear(w));
    WaypointFollower f(sc.robot_a.start, sc.robot_a.path, m);
    bool seen = false;
    while (!f.done() && !seen) {
      f.step();
      const Detection rel = to_relative(sc.robot_b.start.position(), f.pose());
      seen = std::abs(rel.bearing) <= 0.5 * s.camera.fov && rel.range <= s.camera.max_range &&
             raycast(sym(), f.pose(), rel.bearing, rel.range) >= rel.range;
    }
    EXPECT_TRUE(seen) << "seed " << seed;
  }
}

TEST(Scenario, MostSeedsProduceDetections) {
  SensorSpec s;
  s.noise_free = true;
  MotionSpec m;
  int with = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto sc = generate_scenario(sym(), seed, s);
    const auto log = record(sc, sym(), s, m, seed);
    bool any = false;
    for (const auto& t : log.ticks) any = any || t.detection.has_value();
    with += any;
  }
  EXPECT_GE(with, 18);
}

TEST(Scenario, ImpossibleMapFails) {
  const auto g = open_map(6, 6);
  EXPECT_THROW(generate_scenario(g, 1, SensorSpec{}), ScenarioError);
}

class RecordedRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    spec_ = new SensorSpec();
    sc_ = new Scenario(generate_scenario(sym(), 3, *spec_));
    rec_ = new RunLog(record(*sc_, sym(), *spec_, MotionSpec{}, 11));
  }
  static void TearDownTestSuite() {
    delete spec_;
    delete sc_;
    delete rec_;
  }
  static SensorSpec* spec_;
  static Scenario* sc_;
  static RunLog* rec_;
};
SensorSpec* RecordedRun::spec_ = nullptr;
Scenario* RecordedRun::sc_ = nullptr;
RunLog* RecordedRun::rec_ = nullptr;

TEST_F(RecordedRun, GroundTruthStaysClearAndTimesIncrease) {
  for (std::size_t k = 0; k < rec_->ticks.size(); ++k) {
    const auto& t = rec_->ticks[k];
    if (k) {
      EXPECT_GT(t.t, rec_->ticks[k - 1].t);
    }
    EXPECT_GE(clearance(sym(), t.gt_a.position(), 1.0), 0.16);
    EXPECT_GE(clearance(sym(), t.gt_b.position(), 1.0), 0.16);
  }
}

TEST_F(RecordedRun, DetectionsRespectFovAndLineOfSight) {
  int n = 0;
  for (const auto& t : rec_->ticks) {
    if (!t.detection) continue;
    ++n;
    const Detection rel = to_relative(t.gt_b.position(), t.gt_a);
    EXPECT_LE(std::abs(rel.bearing), 0.5 * spec_->camera.fov);
    EXPECT_TRUE(line_of_sight(sym(), t.gt_a.position(), t.gt_b.position()));
    EXPECT_NEAR(t.detection->truth.range, rel.range, 1e-12);
  }
  EXPECT_GT(n, 0);
  EXPECT_GE(rec_->header.first_detection_time, 0.0);
}

TEST_F(RecordedRun, BHoldsStillUntilSeen) {
  for (const auto& t : rec_->ticks) {
    if (t.t > rec_->header.first_detection_time + 1e-9) break;
    EXPECT_EQ(t.gt_b, sc_->robot_b.start);
  }
}

TEST_F(RecordedRun, ReplayIsBitIdenticalPerSeed) {
  const FusionStrategy s(Method::kCompressPP, 0.06);
  const auto a = replay(*rec_, sym(), s, small_run(), 5);
  const auto b = replay(*rec_, sym(), s, small_run(), 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(digest(a), digest(b));
  EXPECT_EQ(to_jsonl(a, false), to_jsonl(b, false));
  const auto c = replay(*rec_, sym(), s, small_run(), 6);
  EXPECT_NE(digest(a), digest(c));
}

TEST_F(RecordedRun, RecordIsBitIdenticalPerSeed) {
  const auto again = record(*sc_, sym(), *spec_, MotionSpec{}, 11);
  EXPECT_EQ(again, *rec_);
  EXPECT_EQ(digest(again), digest(*rec_));
}

TEST_F(RecordedRun, MessageBytesReproduceLoggedPosterior) {
  for (Method m : {Method::kCompressPP, Method::kKMeans, Method::kDet, Method::kProrok}) {
    RunConfig rc = small_run();
    rc.snapshot_messages = 3;
    const auto log = replay(*rec_, sym(), FusionStrategy(m, 0.06), rc, 9);
    ASSERT_FALSE(log.snapshots.empty());
    const auto snaps = decode_snapshots(encode_snapshots(log.snapshots));
    ASSERT_EQ(snaps, log.snapshots);
    const auto parsed = parse_jsonl(to_jsonl(log));
    for (const auto& sn : snaps) {
      const auto& msg = parsed.ticks[sn.tick].message;
      ASSERT_TRUE(msg);
      EXPECT_EQ(msg->seq, sn.seq);
      const BeliefSummary rx = decode(msg->bytes);
      const Belief re = fuse(sn.before, rx, DetectionModel::for_detection(rx.detection), FusionStrategy(m, 0.06));
      EXPECT_EQ(re, sn.after_fusion) << method_name(m);
    }
  }
}

TEST_F(RecordedRun, JsonlRoundTrip) {
  RunConfig rc = small_run();
  rc.keep_scans = true;
  const auto log = replay(*rec_, sym(), FusionStrategy(Method::kNaive, 0.06), rc, 2);
  auto parsed = parse_jsonl(to_jsonl(log));
  parsed.snapshots = log.snapshots;
  EXPECT_EQ(parsed, log);
  EXPECT_EQ(to_jsonl(parsed), to_jsonl(log));
  EXPECT_EQ(parse_jsonl(to_jsonl(*rec_)), *rec_);
}

TEST_F(RecordedRun, SchemaMismatchRejected) {
  std::string text = to_jsonl(*rec_);
  const auto at = text.find("\"schema\":1");
  ASSERT_NE(at, std::string::npos);
  text.replace(at, 10, "\"schema\":9");
  EXPECT_THROW(parse_jsonl(text), LogFormatError);
  EXPECT_THROW(parse_jsonl(""), LogFormatError);
}

TEST_F(RecordedRun, PlainFilterSendsNothing) {
  const auto log = replay(*rec_, sym(), std::nullopt, small_run(), 1);
  for (const auto& t : log.ticks) EXPECT_FALSE(t.message);
  EXPECT_EQ(log.header.strategy, "mcl");
}

TEST(Run, NoiseFreeLocalizedRobotTracks) {
  SensorSpec s;
  s.noise_free = true;
  const auto sc = generate_scenario(sym(), 4, s);
  RunConfig rc = small_run(500);
  rc.init_sigma_xy = 1e-6;
  rc.init_sigma_theta = 1e-6;
  const auto log = run(sc, sym(), std::nullopt, s, MotionSpec{}, rc, 4);
  double worst = 0;
  for (const auto& t : log.ticks) worst = std::max(worst, distance(t.gt_a.position(), t.est_a->position()));
  EXPECT_LT(worst, 0.1);
}

// Two rooms that are copies of each other under a half turn: a filter that never receives a
// detection sees identical evidence for a pose and its mirror image.
TEST(Run, UndetectedRobotKeepsSymmetricHypotheses) {
  SensorSpec s;
  MotionSpec m;
  m.b_waits_for_detection = false;
  const auto sc = generate_scenario(sym(), 2, s, m);
  s.camera.max_range = 1e-3;  // never detected
  RunConfig rc;
  rc.mcl.n_particles = 2000;
  const auto rec = record(sc, sym(), s, m, 2);
  for (const auto& t : rec.ticks) ASSERT_FALSE(t.detection);

  const DistanceField df(sym());
  Rng ib = derive_rng(2, 20);
  MclFilter fb(init_uniform(sym(), rc.mcl.n_particles, ib), rc.mcl, derive_rng(2, 21));
  Scan scan;
  scan.bearings = rec.header.lidar_bearings;
  for (const auto& t : rec.ticks) {
    fb.add_odometry(t.odo_b);
    if (!t.scan_b.empty()) {
      scan.ranges = t.scan_b;
      fb.on_scan(scan, df);
    }
  }
  // 2-means on final positions, seeded at the true pose and its mirror image
  const Pose gt = rec.ticks.back().gt_b;
  const Vec2 c{0.5 * sym().width() * sym().resolution(), 0.5 * sym().height() * sym().resolution()};
  std::array<Vec2, 2> ctr{gt.position(), 2.0 * c - gt.position()};
  std::array<double, 2> mass{};
  for (int it = 0; it < 10; ++it) {
    std::array<Vec2, 2> acc{};
    mass = {0, 0};
    for (const auto& p : fb.belief().particles) {
      const int k = distance(p.pose.position(), ctr[0]) <= distance(p.pose.position(), ctr[1]) ? 0 : 1;
      acc[k] = acc[k] + p.weight * p.pose.position();
      mass[k] += p.weight;
    }
    for (int k = 0; k < 2; ++k) {
      if (mass[k] > 0) ctr[k] = (1.0 / mass[k]) * acc[k];
    }
  }
  EXPECT_GT(std::min(mass[0], mass[1]), 0.1);
  EXPECT_GT(distance(ctr[0], ctr[1]), 1.0);
}
