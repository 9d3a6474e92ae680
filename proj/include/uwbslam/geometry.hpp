#pragma once

#include <Eigen/Core>

namespace uwbslam {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Wraps an angle into (-pi, pi]. Throws std::invalid_argument on NaN/inf.
double normalize_angle(double theta);

/// Planar pose. Heading is normalized on every construction and assignment.
class Pose2 {
 public:
  Pose2() = default;
  Pose2(double x, double y, double theta);
  Pose2(const Vec2& translation, double theta);

  double x() const { return x_; }
  double y() const { return y_; }
  double theta() const { return theta_; }
  Vec2 translation() const { return {x_, y_}; }
  Mat2 rotation() const;

  void set(double x, double y, double theta);

  /// Maps a point expressed in this pose's frame into the parent frame.
  Vec2 transform_point(const Vec2& local) const;
  /// Inverse of transform_point.
  Vec2 inverse_transform_point(const Vec2& world) const;

  bool operator==(const Pose2&) const = default;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double theta_ = 0.0;
};

/// Applies b in the frame of a.
Pose2 compose(const Pose2& a, const Pose2& b);
/// Pose of b expressed in the frame of a.
Pose2 between(const Pose2& a, const Pose2& b);
Pose2 inverse(const Pose2& p);

/// Rigid transform (rotation angle + translation) acting on points: p' = R p + t.
struct Transform2 {
  double rotation = 0.0;
  Vec2 translation = Vec2::Zero();

  Transform2() = default;
  Transform2(double rotation_rad, const Vec2& t);

  static Transform2 identity() { return {}; }
  static Transform2 from_pose(const Pose2& p) { return {p.theta(), p.translation()}; }
  Pose2 to_pose() const { return {translation, rotation}; }

  Mat2 rotation_matrix() const;
  Vec2 apply(const Vec2& p) const;
};

/// (a * b)(p) = a(b(p)).
Transform2 compose(const Transform2& a, const Transform2& b);
Transform2 inverse(const Transform2& t);

}  // namespace uwbslam
