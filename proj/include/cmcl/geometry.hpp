#pragma once

#include <cmath>
#include <numbers>

namespace cmcl {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wrap an angle into [0, 2pi).
inline double wrap_two_pi(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  // fmod of a tiny negative number plus 2pi can round up to exactly 2pi
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Wrap an angle into (-pi, pi].
inline double wrap_pi(double a) {
  double r = std::fmod(a + kPi, kTwoPi);
  if (r <= 0.0) r += kTwoPi;
  return r - kPi;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;

  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
};

using Position2D = Vec2;

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Planar pose. theta is kept in [0, 2pi) by every operation that produces a Pose.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const Pose&, const Pose&) = default;
};

inline Pose make_pose(double x, double y, double theta) { return {x, y, wrap_two_pi(theta)}; }

/// Relative polar observation of another robot, in the observer's body frame.
struct Detection {
  double range = 0.0;
  double bearing = 0.0;  // (-pi, pi]
  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Absolute position of a detection made from `observer`.
inline Position2D to_absolute(const Detection& d, const Pose& observer) {
  const double a = observer.theta + d.bearing;
  return {observer.x + d.range * std::cos(a), observer.y + d.range * std::sin(a)};
}

/// Inverse of to_absolute. A point coinciding with the observer maps to (0, 0).
inline Detection to_relative(Position2D p, const Pose& observer) {
  const double dx = p.x - observer.x;
  const double dy = p.y - observer.y;
  const double r = std::hypot(dx, dy);
  if (r == 0.0) return {0.0, 0.0};
  return {r, wrap_pi(std::atan2(dy, dx) - observer.theta)};
}

/// Rigid motion expressed in the body frame of the robot that performs it.
struct OdometryDelta {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;

  double translation() const { return std::hypot(dx, dy); }
  friend bool operator==(const OdometryDelta&, const OdometryDelta&) = default;
};

/// Apply a body-frame motion to a pose.
inline Pose compose(const Pose& p, const OdometryDelta& u) {
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  return make_pose(p.x + c * u.dx - s * u.dy, p.y + s * u.dx + c * u.dy, p.theta + u.dtheta);
}

/// Concatenate two body-frame motions: first `a`, then `b` (expressed in the frame reached after `a`).
inline OdometryDelta compose(const OdometryDelta& a, const OdometryDelta& b) {
  const double c = std::cos(a.dtheta);
  const double s = std::sin(a.dtheta);
  return {a.dx + c * b.dx - s * b.dy, a.dy + s * b.dx + c * b.dy, a.dtheta + b.dtheta};
}

/// Body-frame motion that takes `from` to `to`.
inline OdometryDelta between(const Pose& from, const Pose& to) {
  const double c = std::cos(from.theta);
  const double s = std::sin(from.theta);
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  return {c * dx + s * dy, -s * dx + c * dy, wrap_pi(to.theta - from.theta)};
}

/// Smallest absolute difference between two angles, in [0, pi].
inline double angular_distance(double a, double b) { return std::abs(wrap_pi(a - b)); }

/// Symmetric 2x2 matrix.
struct Mat2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  double det() const { return xx * yy - xy * xy; }
  friend Mat2 operator+(Mat2 a, Mat2 b) { return {a.xx + b.xx, a.xy + b.xy, a.yy + b.yy}; }
  friend bool operator==(Mat2, Mat2) = default;

  static Mat2 isotropic(double variance) { return {variance, 0.0, variance}; }
};

/// Bivariate normal density with precomputed inverse and normalizer.
class Gaussian2 {
 public:
  Gaussian2() = default;
  Gaussian2(Vec2 mean, Mat2 cov) : mean_(mean) {
    const double d = cov.det();
    inv_ = {cov.yy / d, -cov.xy / d, cov.xx / d};
    norm_ = 1.0 / (kTwoPi * std::sqrt(d));
  }

  double operator()(Vec2 p) const { return density(p.x, p.y); }

  double density(double x, double y) const {
    const double dx = x - mean_.x;
    const double dy = y - mean_.y;
    const double q = inv_.xx * dx * dx + 2.0 * inv_.xy * dx * dy + inv_.yy * dy * dy;
    return norm_ * std::exp(-0.5 * q);
  }

  Vec2 mean() const { return mean_; }

 private:
  Vec2 mean_{};
  Mat2 inv_{};
  double norm_ = 0.0;
};

}  // namespace cmcl
