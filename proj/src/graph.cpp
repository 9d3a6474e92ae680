#include "uwbslam/graph.hpp"

#include <fmt/format.h>

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace uwbslam {
namespace {

void check_information(const Mat3& info, const char* what) {
  if (!info.allFinite()) {
    throw GraphError(fmt::format("{}: non-finite information matrix", what));
  }
  if ((info - info.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, info.cwiseAbs().maxCoeff())) {
    throw GraphError(fmt::format("{}: information matrix is not symmetric", what));
  }
  Eigen::LLT<Mat3> llt(info);
  if (llt.info() != Eigen::Success) {
    throw GraphError(fmt::format("{}: information matrix is not positive definite", what));
  }
}

void write_information(std::ostream& os, const Mat3& m) {
  os << fmt::format(" {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g}", m(0, 0), m(0, 1), m(0, 2), m(1, 1),
                    m(1, 2), m(2, 2));
}

Mat3 read_information(std::istream& is) {
  double a, b, c, d, e, f;
  is >> a >> b >> c >> d >> e >> f;
  Mat3 m;
  m << a, b, c, b, d, e, c, e, f;
  return m;
}

}  // namespace

Mat3 OdometryNoise::information() const {
  return Vec3(1.0 / (sigma_translation * sigma_translation), 1.0 / (sigma_translation * sigma_translation),
              1.0 / (sigma_rotation * sigma_rotation))
      .asDiagonal();
}

Mat3 LoopNoise::information(double fitness) const {
  const double scale = 1.0 / std::max(fitness, min_fitness);
  return scale * Vec3(1.0 / (sigma_translation * sigma_translation), 1.0 / (sigma_translation * sigma_translation),
                      1.0 / (sigma_rotation * sigma_rotation))
                     .asDiagonal()
                     .toDenseMatrix();
}

int PoseGraph::add_robot_vertex(double stamp, const Pose2& pose) {
  const int index = static_cast<int>(robots_.size());
  robots_.push_back({index, stamp, pose});
  return index;
}

void PoseGraph::add_uwb_vertex(int id, const Vec2& position) {
  if (has_uwb_vertex(id)) {
    throw GraphError(fmt::format("duplicate UWB vertex id {}", id));
  }
  nodes_.push_back({id, position});
}

bool PoseGraph::has_uwb_vertex(int id) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [id](const UwbVertex& v) { return v.id == id; });
}

const OdometryEdge& PoseGraph::add_odometry_edge(int i, const Pose2& prev, const Pose2& curr,
                                                 const OdometryNoise& noise) {
  return add_odometry_edge(OdometryEdge{i, i + 1, between(prev, curr), noise.information()});
}

const OdometryEdge& PoseGraph::add_odometry_edge(OdometryEdge edge) {
  const int n = static_cast<int>(robots_.size());
  if (edge.i < 0 || edge.j != edge.i + 1 || edge.j >= n) {
    throw GraphError(fmt::format("odometry edge {}->{} must join consecutive vertices", edge.i, edge.j));
  }
  check_information(edge.information, "odometry edge");
  odometry_.push_back(edge);
  return odometry_.back();
}

const RangeEdge& PoseGraph::add_range_edge(RangeEdge edge) {
  if (edge.i < 0 || edge.i >= static_cast<int>(robots_.size())) {
    throw GraphError(fmt::format("range edge references unknown robot vertex {}", edge.i));
  }
  if (!has_uwb_vertex(edge.node_id)) {
    throw GraphError(fmt::format("range edge references unknown UWB vertex {}", edge.node_id));
  }
  if (!(edge.distance > 0.0) || !(edge.precision > 0.0)) {
    throw GraphError("range edge needs positive distance and precision");
  }
  ranges_.push_back(edge);
  return ranges_.back();
}

const LoopEdge& PoseGraph::add_loop_edge(LoopEdge edge) {
  const int n = static_cast<int>(robots_.size());
  if (edge.i < 0 || edge.j < 0 || edge.i >= n || edge.j >= n || std::abs(edge.i - edge.j) < 2) {
    throw GraphError(fmt::format("loop edge {}-{} must join non-adjacent vertices", edge.i, edge.j));
  }
  check_information(edge.information, "loop edge");
  loops_.push_back(edge);
  return loops_.back();
}

Assignment PoseGraph::assignment() const {
  Assignment a;
  a.poses.reserve(robots_.size());
  for (const auto& v : robots_) {
    a.poses.push_back(v.pose);
  }
  for (const auto& n : nodes_) {
    a.nodes[n.id] = n.position;
  }
  return a;
}

void PoseGraph::set_assignment(const Assignment& a) {
  if (a.poses.size() != robots_.size()) {
    throw GraphError("assignment pose count does not match graph");
  }
  for (std::size_t k = 0; k < robots_.size(); ++k) {
    robots_[k].pose = a.poses[k];
  }
  for (auto& n : nodes_) {
    const auto it = a.nodes.find(n.id);
    if (it == a.nodes.end()) {
      throw GraphError(fmt::format("assignment misses UWB vertex {}", n.id));
    }
    n.position = it->second;
  }
}

void PoseGraph::write(std::ostream& os) const {
  for (const auto& v : robots_) {
    os << fmt::format("VERTEX_POSE {} {:.17g} {:.17g} {:.17g} {:.17g}\n", v.index, v.stamp, v.pose.x(), v.pose.y(),
                      v.pose.theta());
  }
  for (const auto& n : nodes_) {
    os << fmt::format("VERTEX_UWB {} {:.17g} {:.17g}\n", n.id, n.position.x(), n.position.y());
  }
  for (const auto& e : odometry_) {
    os << fmt::format("EDGE_ODOM {} {} {:.17g} {:.17g} {:.17g}", e.i, e.j, e.measurement.x(), e.measurement.y(),
                      e.measurement.theta());
    write_information(os, e.information);
    os << '\n';
  }
  for (const auto& e : ranges_) {
    os << fmt::format("EDGE_RANGE {} {} {:.17g} {:.17g} {:.17g} {:.17g}\n", e.i, e.node_id, e.distance, e.precision,
                      e.offset.x(), e.offset.y());
  }
  for (const auto& e : loops_) {
    os << fmt::format("EDGE_LOOP {} {} {:.17g} {:.17g} {:.17g}", e.i, e.j, e.measurement.x(), e.measurement.y(),
                      e.measurement.theta());
    write_information(os, e.information);
    os << fmt::format(" {:.17g}\n", e.fitness);
  }
}

PoseGraph PoseGraph::read(std::istream& is) {
  PoseGraph g;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "VERTEX_POSE") {
      int index;
      double stamp, x, y, th;
      ls >> index >> stamp >> x >> y >> th;
      if (ls && index != static_cast<int>(g.robots_.size())) {
        throw GraphError(fmt::format("line {}: robot vertices must be contiguous from 0", line_no));
      }
      if (ls) g.add_robot_vertex(stamp, Pose2(x, y, th));
    } else if (tag == "VERTEX_UWB") {
      int id;
      double x, y;
      ls >> id >> x >> y;
      if (ls) g.add_uwb_vertex(id, Vec2(x, y));
    } else if (tag == "EDGE_ODOM") {
      OdometryEdge e;
      double dx, dy, dth;
      ls >> e.i >> e.j >> dx >> dy >> dth;
      e.measurement = Pose2(dx, dy, dth);
      e.information = read_information(ls);
      if (ls) g.add_odometry_edge(e);
    } else if (tag == "EDGE_RANGE") {
      RangeEdge e;
      double ox = 0.0, oy = 0.0;
      ls >> e.i >> e.node_id >> e.distance >> e.precision >> ox >> oy;
      e.offset = Vec2(ox, oy);
      if (ls) g.add_range_edge(e);
    } else if (tag == "EDGE_LOOP") {
      LoopEdge e;
      double dx, dy, dth;
      ls >> e.i >> e.j >> dx >> dy >> dth;
      e.measurement = Pose2(dx, dy, dth);
      e.information = read_information(ls);
      ls >> e.fitness;
      if (ls) g.add_loop_edge(e);
    } else {
      throw GraphError(fmt::format("line {}: unknown record '{}'", line_no, tag));
    }
    if (!ls) {
      throw GraphError(fmt::format("line {}: malformed {} record", line_no, tag));
    }
  }
  return g;
}

Vec3 relative_pose_residual(const Pose2& measurement, const Pose2& xi, const Pose2& xj) {
  const Pose2 predicted = between(xi, xj);
  return {measurement.x() - predicted.x(), measurement.y() - predicted.y(),
          normalize_angle(measurement.theta() - predicted.theta())};
}

RelativeLinearization linearize_relative(const Pose2& measurement, const Pose2& xi, const Pose2& xj) {
  RelativeLinearization lin;
  lin.residual = relative_pose_residual(measurement, xi, xj);

  const double c = std::cos(xi.theta());
  const double s = std::sin(xi.theta());
  const double dx = xj.x() - xi.x();
  const double dy = xj.y() - xi.y();

  // prediction h = (R_i^T (t_j - t_i), theta_j - theta_i); residual = z - h
  Mat3 dh_di;
  dh_di << -c, -s, -s * dx + c * dy,  //
      s, -c, -c * dx - s * dy,         //
      0.0, 0.0, -1.0;
  Mat3 dh_dj;
  dh_dj << c, s, 0.0,  //
      -s, c, 0.0,      //
      0.0, 0.0, 1.0;
  lin.jacobian_i = -dh_di;
  lin.jacobian_j = -dh_dj;
  return lin;
}

RangeLinearization linearize_range(const RangeEdge& edge, const Pose2& xi, const Vec2& node) {
  RangeLinearization lin;
  const Vec2 lever = xi.rotation() * edge.offset;
  const Vec2 diff = xi.translation() + lever - node;
  const double dist = diff.norm();
  lin.residual = edge.distance - dist;
  lin.jacobian_pose.setZero();
  lin.jacobian_node.setZero();
  if (dist < 1e-12) {
    lin.degenerate = true;
    return lin;
  }
  const Vec2 unit = diff / dist;
  lin.jacobian_pose(0, 0) = -unit.x();
  lin.jacobian_pose(0, 1) = -unit.y();
  // d(R o)/d theta = (-ly, lx) with l = R o
  lin.jacobian_pose(0, 2) = -unit.dot(Vec2(-lever.y(), lever.x()));
  lin.jacobian_node = unit.transpose();
  return lin;
}

Vec3 odometry_residual(const OdometryEdge& edge, const Pose2& xi, const Pose2& xj) {
  return relative_pose_residual(edge.measurement, xi, xj);
}

double range_residual(const RangeEdge& edge, const Pose2& xi, const Vec2& node) {
  return edge.distance - (xi.transform_point(edge.offset) - node).norm();
}

Vec3 loop_residual(const LoopEdge& edge, const Pose2& xi, const Pose2& xj) {
  return relative_pose_residual(edge.measurement, xi, xj);
}

double total_cost(const PoseGraph& graph, const Assignment& assignment) {
  const auto& poses = assignment.poses;
  if (poses.size() != graph.robot_vertices().size()) {
    throw GraphError("assignment does not cover every robot vertex");
  }
  double cost = 0.0;
  for (const auto& e : graph.loop_edges()) {
    const Vec3 r = loop_residual(e, poses[e.i], poses[e.j]);
    cost += r.dot(e.information * r);
  }
  for (const auto& e : graph.odometry_edges()) {
    const Vec3 r = odometry_residual(e, poses[e.i], poses[e.j]);
    cost += r.dot(e.information * r);
  }
  for (const auto& e : graph.range_edges()) {
    const auto it = assignment.nodes.find(e.node_id);
    if (it == assignment.nodes.end()) {
      throw GraphError(fmt::format("assignment misses UWB vertex {}", e.node_id));
    }
    const double r = range_residual(e, poses[e.i], it->second);
    cost += e.precision * r * r;
  }
  return cost;
}

}  // namespace uwbslam
