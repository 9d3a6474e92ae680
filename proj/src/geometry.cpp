#include "uwbslam/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace uwbslam {

double normalize_angle(double theta) {
  if (!std::isfinite(theta)) {
    throw std::invalid_argument("normalize_angle: non-finite angle");
  }
  constexpr double kPi = std::numbers::pi;
  if (theta > -kPi && theta <= kPi) {
    return theta;
  }
  // remainder() is exact and lands in [-pi, pi].
  double wrapped = std::remainder(theta, 2.0 * kPi);
  if (wrapped <= -kPi) {
    wrapped += 2.0 * kPi;
  }
  return wrapped;
}

Pose2::Pose2(double x, double y, double theta) : x_(x), y_(y), theta_(normalize_angle(theta)) {}

Pose2::Pose2(const Vec2& translation, double theta) : Pose2(translation.x(), translation.y(), theta) {}

void Pose2::set(double x, double y, double theta) {
  x_ = x;
  y_ = y;
  theta_ = normalize_angle(theta);
}

Mat2 Pose2::rotation() const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

Vec2 Pose2::transform_point(const Vec2& local) const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  return {x_ + c * local.x() - s * local.y(), y_ + s * local.x() + c * local.y()};
}

Vec2 Pose2::inverse_transform_point(const Vec2& world) const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  const double dx = world.x() - x_;
  const double dy = world.y() - y_;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  return {a.transform_point(b.translation()), a.theta() + b.theta()};
}

Pose2 between(const Pose2& a, const Pose2& b) {
  return {a.inverse_transform_point(b.translation()), b.theta() - a.theta()};
}

Pose2 inverse(const Pose2& p) {
  const double c = std::cos(p.theta());
  const double s = std::sin(p.theta());
  return {-c * p.x() - s * p.y(), s * p.x() - c * p.y(), -p.theta()};
}

Transform2::Transform2(double rotation_rad, const Vec2& t)
    : rotation(normalize_angle(rotation_rad)), translation(t) {}

Mat2 Transform2::rotation_matrix() const {
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

Vec2 Transform2::apply(const Vec2& p) const { return rotation_matrix() * p + translation; }

Transform2 compose(const Transform2& a, const Transform2& b) {
  return {a.rotation + b.rotation, a.apply(b.translation)};
}

Transform2 inverse(const Transform2& t) {
  return {-t.rotation, -(t.rotation_matrix().transpose() * t.translation)};
}

}  // namespace uwbslam
