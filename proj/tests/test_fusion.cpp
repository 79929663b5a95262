#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cmcl/fusion.hpp"

using namespace cmcl;

namespace {

Belief random_belief(std::size_t n, Rng& rng, double spread = 3.0) {
  std::uniform_real_distribution<double> u(-spread, spread), th(0, kTwoPi), w(0.1, 1.0);
  Belief b;
  for (std::size_t i = 0; i < n; ++i) b.particles.push_back({make_pose(u(rng), u(rng), th(rng)), w(rng)});
  normalize(b);
  return b;
}

BeliefSummary naive_msg(const Belief& sender, const Detection& d) {
  BeliefSummary m;
  m.method = Method::kNaive;
  m.detection = d;
  PoseSet ps;
  for (const auto& p : sender.particles) ps.poses.push_back(p.pose);
  m.payload = ps;
  return m;
}

BeliefSummary coreset_msg(std::vector<Vec2> pts, const Detection& d) {
  BeliefSummary m;
  m.method = Method::kCompressPP;
  m.detection = d;
  m.payload = CoresetPayload{std::move(pts)};
  return m;
}

// Independent oracle: w_i * (sum_j w_j N(x_i; T(d; x_j), s^2 I) + eps), renormalized.
std::vector<double> naive_oracle(const Belief& b, const Belief& sender, const Detection& d, double s2) {
  std::vector<double> w(b.size());
  double total = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    long double acc = 0;
    for (const auto& a : sender.particles) {
      const double cx = a.pose.x + d.range * std::cos(a.pose.theta + d.bearing);
      const double cy = a.pose.y + d.range * std::sin(a.pose.theta + d.bearing);
      const double dx = b.particles[i].pose.x - cx, dy = b.particles[i].pose.y - cy;
      acc += std::exp(-(dx * dx + dy * dy) / (2 * s2)) / (2 * M_PI * s2);
    }
    w[i] = b.particles[i].weight * (static_cast<double>(acc / sender.size()) + 1e-12);
    total += w[i];
  }
  for (auto& x : w) x /= total;
  return w;
}

}  // namespace

TEST(DetectionLikelihood, ClosedForms) {
  EXPECT_NEAR(detection_likelihood({1, 2}, {1, 2}, Mat2::isotropic(1.0)), 1.0 / (2 * kPi), 1e-12);
  EXPECT_NEAR(1.0 / (2 * kPi), 0.15915, 1e-5);
  const double s = 0.3;
  const double peak = detection_likelihood({0, 0}, {0, 0}, Mat2::isotropic(s * s));
  EXPECT_NEAR(detection_likelihood({s, 0}, {0, 0}, Mat2::isotropic(s * s)), peak * std::exp(-0.5), 1e-12);
  double prev = peak;
  for (double r = 0.1; r < 20; r += 0.1) {
    const double v = detection_likelihood({r, r / 2}, {0, 0}, Mat2::isotropic(0.25));
    EXPECT_LE(v, prev);
    prev = v;
  }
  EXPECT_GT(detection_likelihood({0, 0}, {0, 0}, Mat2{}), 0.0);  // singular covariance is floored
}

TEST(DetectionModel, RangeDependentSigma) {
  const auto near = DetectionModel::for_detection({0.5, 0.1});
  EXPECT_DOUBLE_EQ(near.sigma.xx, 0.05 * 0.05);
  const auto far = DetectionModel::for_detection({4.0, 0.1});
  EXPECT_NEAR(far.sigma.xx, 0.2 * 0.2, 1e-15);
  EXPECT_EQ(far.sigma.xy, 0.0);
  EXPECT_NEAR(far.polar_var_range(), 0.04, 1e-15);
  EXPECT_NEAR(far.polar_var_bearing(), 0.0009, 1e-15);
}

TEST(FusionStrategy, DetForcesZeroAlpha) {
  EXPECT_EQ(FusionStrategy(Method::kDet, 0.06).alpha, 0.0);
  EXPECT_EQ(FusionStrategy(Method::kNaive, 0.06).alpha, 0.06);
  EXPECT_THROW(FusionStrategy(Method::kNaive, 1.5), InvalidArgument);
}

TEST(Fuse, NaiveMatchesOracle) {
  Rng rng(1);
  for (int c = 0; c < 20; ++c) {
    const auto recv = random_belief(100, rng);
    auto sender = random_belief(50, rng);
    set_uniform(sender);
    const Detection d{1.5, 0.4};
    const auto model = DetectionModel::for_detection(d);
    const auto post = fuse(recv, naive_msg(sender, d), model);
    const auto expect = naive_oracle(recv, sender, d, model.sigma.xx);
    for (std::size_t i = 0; i < post.size(); ++i) EXPECT_NEAR(post.particles[i].weight, expect[i], 1e-12);
  }
}

TEST(Fuse, NaiveEqualsCoresetBitLevel) {
  Rng rng(2);
  for (int c = 0; c < 50; ++c) {
    const auto recv = random_belief(200, rng);
    auto sender = random_belief(64, rng);
    set_uniform(sender);
    const Detection d{2.0, -0.7};
    const auto model = DetectionModel::for_detection(d);
    const auto a = fuse(recv, naive_msg(sender, d), model);
    const auto b = fuse(recv, coreset_msg(project_samples(sender, d), d), model);
    EXPECT_EQ(a, b);
  }
}

TEST(Fuse, SingleSenderParticleEqualsSinglePoint) {
  Rng rng(3);
  const auto recv = random_belief(100, rng);
  Belief sender;
  sender.particles.push_back({make_pose(0.3, -0.2, 1.1), 1.0});
  const Detection d{1.2, 0.2};
  const auto model = DetectionModel::for_detection(d);
  const auto a = fuse(recv, naive_msg(sender, d), model);
  const auto b = fuse(recv, coreset_msg({to_absolute(d, sender.particles[0].pose)}, d), model);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.particles[i].weight, b.particles[i].weight, 1e-12);
}

TEST(Fuse, SinglePointIsPriorTimesGaussian) {
  Rng rng(4);
  const auto recv = random_belief(100, rng);
  const Vec2 p{0.5, 0.5};
  const auto model = DetectionModel::for_detection({1.0, 0.0});
  const auto post = fuse(recv, coreset_msg({p}, {1.0, 0.0}), model);
  std::vector<double> w;
  double t = 0;
  for (const auto& q : recv.particles) {
    const double d2 = (q.pose.position() - p).squared_norm();
    w.push_back(q.weight * (std::exp(-d2 / (2 * model.sigma.xx)) / (2 * kPi * model.sigma.xx) + 1e-12));
    t += w.back();
  }
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(post.particles[i].weight, w[i] / t, 1e-12);
}

TEST(Fuse, KmeansSingletonsApproximateNaive) {
  Rng rng(5);
  for (int c = 0; c < 20; ++c) {
    const auto recv = random_belief(100, rng);
    auto sender = random_belief(100, rng);
    set_uniform(sender);
    const Detection d{1.0, 0.3};
    const auto model = DetectionModel::for_detection(d);
    BeliefSummary km;
    km.method = Method::kKMeans;
    km.detection = d;
    km.payload = kmeans_cluster(project_samples(sender, d), 100, 5, rng);
    const auto a = fuse(recv, naive_msg(sender, d), model);
    const auto b = fuse(recv, km, model);
    double tv = 0;
    for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a.particles[i].weight - b.particles[i].weight);
    EXPECT_LT(0.5 * tv, 1e-3);
  }
}

TEST(Fuse, NormalizedAndNonNegativeForAllTags) {
  Rng rng(6);
  const CompressionConfig cfg;
  for (Method m : kAllMethods) {
    for (int c = 0; c < 5; ++c) {
      const auto recv = random_belief(300, rng, 10.0);
      const auto sender = random_belief(256, rng);
      const Detection d{1.5, 0.2};
      const auto msg = summarize(sender, d, m, cfg, {}, rng);
      const auto post = fuse(recv, msg, DetectionModel::for_detection(d), FusionStrategy(m, 0.06));
      double t = 0;
      for (const auto& p : post.particles) {
        EXPECT_GE(p.weight, 0.0);
        t += p.weight;
      }
      EXPECT_NEAR(t, 1.0, 1e-9) << method_name(m);
    }
  }
}

TEST(Fuse, MonotoneInDistance) {
  Rng rng(7);
  Belief recv;
  for (int i = 0; i < 50; ++i) recv.particles.push_back({make_pose(0.1 * i, 0.0, 0.0), 0.02});
  const auto post = fuse(recv, coreset_msg({{0.0, 0.0}}, {1, 0}), DetectionModel::for_detection({1, 0}));
  for (std::size_t i = 1; i < post.size(); ++i) EXPECT_GE(post.particles[i - 1].weight, post.particles[i].weight);
}

TEST(Fuse, Errors) {
  Rng rng(8);
  const auto recv = random_belief(10, rng);
  EXPECT_THROW(fuse(recv, coreset_msg({}, {1, 0}), DetectionModel{}), InvalidArgument);
  EXPECT_THROW(fuse(recv, coreset_msg({{0, 0}}, {1, 0}), DetectionModel{}, FusionStrategy(Method::kNaive, 0.0)),
               InvalidArgument);
}

TEST(Fuse, DelocalizedReceiverStaysWellDefined) {
  Belief recv;
  recv.particles.assign(10, {make_pose(1000, 1000, 0), 0.1});
  const auto post = fuse(recv, coreset_msg({{0, 0}}, {1, 0}), DetectionModel::for_detection({1, 0}));
  for (const auto& p : post.particles) EXPECT_NEAR(p.weight, 0.1, 1e-12);
}

TEST(Fuse, ProrokPeaksAtDetectedPosition) {
  Belief sender;
  sender.particles.assign(8, {make_pose(0, 0, 0), 1.0 / 8});
  const Detection d{2.0, 0.0};
  BeliefSummary m;
  m.method = Method::kProrok;
  m.detection = d;
  m.payload = dnc_cluster(sender, d, 1);
  Belief recv;
  for (int i = 0; i <= 40; ++i) recv.particles.push_back({make_pose(0.1 * i, 0.0, 0.0), 1.0 / 41});
  const auto post = fuse(recv, m, DetectionModel::for_detection(d));
  std::size_t best = 0;
  for (std::size_t i = 0; i < post.size(); ++i)
    if (post.particles[i].weight > post.particles[best].weight) best = i;
  EXPECT_EQ(best, 20u);
}

TEST(Fuse, DetUsesTreeDensity) {
  Rng rng(9);
  Belief sender = init_gaussian(make_pose(0, 0, 0), 0.3, 0.01, 500, rng);
  const Detection d{1.0, 0.0};
  const auto msg = summarize(sender, d, Method::kDet, {}, {}, rng);
  Belief recv;
  recv.particles = {{make_pose(1.0, 0.0, 0), 0.5}, {make_pose(30.0, 0.0, 0), 0.5}};
  const auto post = fuse(recv, msg, DetectionModel::for_detection(d));
  EXPECT_GT(post.particles[0].weight, 0.999);
}

TEST(Reciprocal, AlphaZeroIsPlainResampling) {
  Rng data(10);
  const auto recv = random_belief(200, data);
  const auto msg = coreset_msg({{0, 0}, {1, 1}}, {1, 0});
  Rng a(5), b(5);
  const auto res = reciprocal_sample_counted(recv, msg, DetectionModel::for_detection({1, 0}), 0.0, a);
  EXPECT_EQ(res.belief, resample_low_variance(recv, b));
  EXPECT_EQ(res.injected, 0u);
}

TEST(Reciprocal, AlphaOneDrawsFromDetectionDistribution) {
  Rng rng(11);
  const auto recv = random_belief(4000, rng, 20.0);
  const Vec2 c{3.0, -2.0};
  const auto model = DetectionModel::for_detection({2.0, 0});
  const auto res = reciprocal_sample_counted(recv, coreset_msg({c}, {2.0, 0}), model, 1.0, rng);
  EXPECT_EQ(res.injected, 4000u);
  double mx = 0, my = 0;
  for (const auto& p : res.belief.particles) mx += p.pose.x, my += p.pose.y;
  mx /= 4000;
  my /= 4000;
  const double sd = std::sqrt(model.sigma.xx);
  EXPECT_LT(std::abs(mx - c.x), 3 * sd / std::sqrt(4000.0));
  EXPECT_LT(std::abs(my - c.y), 3 * sd / std::sqrt(4000.0));
  EXPECT_TRUE(has_uniform_weights(res.belief));
}

TEST(Reciprocal, InjectedCountIsBinomial) {
  Rng data(12);
  const auto recv = random_belief(2000, data);
  const auto msg = coreset_msg({{0, 0}}, {1, 0});
  double total = 0;
  const int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(static_cast<std::uint64_t>(s));
    total += static_cast<double>(
        reciprocal_sample_counted(recv, msg, DetectionModel::for_detection({1, 0}), 0.06, rng).injected);
  }
  const double mean = total / seeds;
  const double expect = 2000 * 0.06;
  const double sigma_mean = std::sqrt(2000 * 0.06 * 0.94 / seeds);
  EXPECT_LT(std::abs(mean - expect), 3 * sigma_mean);
}

TEST(Reciprocal, InjectedParticlesLandNearTruth) {
  // 99% ellipse of an isotropic Gaussian: radius sigma * sqrt(-2 ln 0.01)
  int passes = 0;
  const Vec2 truth{1.0, 1.0};
  for (int s = 0; s < 50; ++s) {
    Rng rng(static_cast<std::uint64_t>(100 + s));
    const auto recv = random_belief(1000, rng, 10.0);
    const Detection d{1.0, 0.0};
    const auto model = DetectionModel::for_detection(d);
    const auto msg = coreset_msg({truth}, d);
    const auto fused = fuse(recv, msg, model);
    const auto res = reciprocal_sample_counted(fused, msg, model, 0.06, rng);
    const double r99 = std::sqrt(model.sigma.xx) * std::sqrt(-2 * std::log(0.01));
    std::size_t inside = 0;
    for (const auto& p : res.belief.particles) inside += distance(p.pose.position(), truth) <= r99;
    passes += inside >= static_cast<std::size_t>(std::ceil(0.06 * 1000 / 2));
  }
  EXPECT_GE(passes, 48);
}

TEST(Reciprocal, DetRejectedAndEveryOtherTagSamples) {
  Rng rng(13);
  const auto sender = random_belief(256, rng);
  const auto recv = random_belief(100, rng);
  const Detection d{1.0, 0.5};
  for (Method m : kAllMethods) {
    const auto msg = summarize(sender, d, m, {}, {}, rng);
    if (m == Method::kDet) {
      EXPECT_THROW(reciprocal_sample(recv, msg, DetectionModel::for_detection(d), 0.5, rng), InvalidArgument);
    } else {
      const auto r = reciprocal_sample_counted(recv, msg, DetectionModel::for_detection(d), 1.0, rng);
      EXPECT_EQ(r.injected, recv.size()) << method_name(m);
      EXPECT_EQ(r.belief.size(), recv.size());
    }
  }
}

TEST(Summarize, SizesPerMethod) {
  Rng rng(14);
  const auto sender = random_belief(2000, rng);
  const Detection d{1.0, 0.0};
  const CompressionConfig cfg;
  EXPECT_EQ(summarize(sender, d, Method::kNaive, cfg, {}, rng).count(), 2000u);
  EXPECT_EQ(summarize(sender, d, Method::kStdThinning, cfg, {}, rng).count(), 64u);
  EXPECT_EQ(summarize(sender, d, Method::kKMeans, cfg, {}, rng).count(), 8u);
  EXPECT_EQ(summarize(sender, d, Method::kProrok, cfg, {}, rng).count(), 8u);
  EXPECT_LE(summarize(sender, d, Method::kDet, cfg, {}, rng).count(), 20u);
  EXPECT_EQ(summarize(sender, d, Method::kCompressPP, cfg, {}, rng).count(), 32u);
  const auto m = summarize(sender, d, Method::kCompressPP, cfg, {}, rng, 3, 9);
  EXPECT_EQ(decode(encode(m)), m);
  EXPECT_EQ(m.sender, 3);
  EXPECT_EQ(m.seq, 9u);
}
