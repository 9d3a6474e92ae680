#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "uwbslam/geometry.hpp"

namespace uwbslam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat32 = Eigen::Matrix<double, 3, 2>;
using Mat13 = Eigen::Matrix<double, 1, 3>;
using Mat12 = Eigen::Matrix<double, 1, 2>;

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Diagonal odometry noise, expressed per graph step.
struct OdometryNoise {
  double sigma_translation = 0.05;  // m
  double sigma_rotation = 0.02;     // rad
  Mat3 information() const;
};

/// UWB ranging noise. Precision is 1/sigma^2.
struct RangeNoise {
  double sigma = 0.1;  // m
  double precision() const { return 1.0 / (sigma * sigma); }
};

/// Loop information is base / fitness, with fitness floored to keep it finite.
struct LoopNoise {
  double sigma_translation = 1.0;
  double sigma_rotation = 1.0;
  double min_fitness = 1e-6;  // m^2
  Mat3 information(double fitness) const;
};

struct RobotVertex {
  int index = 0;
  double stamp = 0.0;
  Pose2 pose;
};

struct UwbVertex {
  int id = 0;
  Vec2 position = Vec2::Zero();
};

struct OdometryEdge {
  int i = 0;
  int j = 0;
  Pose2 measurement;
  Mat3 information = Mat3::Identity();
};

/// The antenna sits at `offset` in the frame of vertex i (non-zero when the range was
/// taken between vertex stamps).
struct RangeEdge {
  int i = 0;
  int node_id = 0;
  double distance = 0.0;
  double precision = 1.0;
  Vec2 offset = Vec2::Zero();
};

struct LoopEdge {
  int i = 0;
  int j = 0;
  Pose2 measurement;
  Mat3 information = Mat3::Identity();
  double fitness = 0.0;
};

/// Values of every optimizable vertex. Nodes are keyed by UWB id.
struct Assignment {
  std::vector<Pose2> poses;
  std::map<int, Vec2> nodes;
};

/// Pose graph holding robot vertices, UWB landmark vertices and the three edge families.
/// Robot vertex 0 is the gauge anchor and is never moved by the optimizer.
class PoseGraph {
 public:
  int add_robot_vertex(double stamp, const Pose2& pose);
  void add_uwb_vertex(int id, const Vec2& position);

  /// Edge measurement is between(prev, curr) of two consecutive odometry readings.
  const OdometryEdge& add_odometry_edge(int i, const Pose2& prev, const Pose2& curr,
                                        const OdometryNoise& noise);
  const OdometryEdge& add_odometry_edge(OdometryEdge edge);
  const RangeEdge& add_range_edge(RangeEdge edge);
  const LoopEdge& add_loop_edge(LoopEdge edge);

  const std::vector<RobotVertex>& robot_vertices() const { return robots_; }
  const std::vector<UwbVertex>& uwb_vertices() const { return nodes_; }
  const std::vector<OdometryEdge>& odometry_edges() const { return odometry_; }
  const std::vector<RangeEdge>& range_edges() const { return ranges_; }
  const std::vector<LoopEdge>& loop_edges() const { return loops_; }

  bool has_uwb_vertex(int id) const;
  int anchor_index() const { return 0; }

  /// Current vertex estimates as an assignment.
  Assignment assignment() const;
  /// Overwrites vertex estimates. Sizes must match.
  void set_assignment(const Assignment& a);

  void clear_loop_edges() { loops_.clear(); }

  void write(std::ostream& os) const;
  static PoseGraph read(std::istream& is);

 private:
  std::vector<RobotVertex> robots_;
  std::vector<UwbVertex> nodes_;
  std::vector<OdometryEdge> odometry_;
  std::vector<RangeEdge> ranges_;
  std::vector<LoopEdge> loops_;
};

/// measurement - between(Xi, Xj) with the angle component wrapped.
Vec3 relative_pose_residual(const Pose2& measurement, const Pose2& xi, const Pose2& xj);

struct RelativeLinearization {
  Vec3 residual;
  Mat3 jacobian_i;  // d residual / d (xi, yi, thetai)
  Mat3 jacobian_j;
};

struct RangeLinearization {
  double residual = 0.0;
  Mat13 jacobian_pose;
  Mat12 jacobian_node;
  bool degenerate = false;  // robot and node coincide; jacobians are zero
};

Vec3 odometry_residual(const OdometryEdge& edge, const Pose2& xi, const Pose2& xj);
double range_residual(const RangeEdge& edge, const Pose2& xi, const Vec2& node);
Vec3 loop_residual(const LoopEdge& edge, const Pose2& xi, const Pose2& xj);

RelativeLinearization linearize_relative(const Pose2& measurement, const Pose2& xi, const Pose2& xj);
RangeLinearization linearize_range(const RangeEdge& edge, const Pose2& xi, const Vec2& node);

/// Sum over every edge of r^T * Omega * r.
double total_cost(const PoseGraph& graph, const Assignment& assignment);

}  // namespace uwbslam
