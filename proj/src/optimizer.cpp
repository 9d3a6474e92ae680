#include "uwbslam/optimizer.hpp"

#include <fmt/format.h>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <ostream>

namespace uwbslam {
namespace {

using Triplet = Eigen::Triplet<double>;

// Adds block (rows at ra, cols at ca) of size RxC; negative offsets mean "fixed variable".
template <typename Block>
void push_block(std::vector<Triplet>& out, int ra, int ca, const Block& b) {
  if (ra < 0 || ca < 0) {
    return;
  }
  for (int r = 0; r < b.rows(); ++r) {
    for (int c = 0; c < b.cols(); ++c) {
      out.emplace_back(ra + r, ca + c, b(r, c));
    }
  }
}

template <typename Vec>
void add_segment(Eigen::VectorXd& g, int offset, const Vec& v) {
  if (offset < 0) {
    return;
  }
  g.segment(offset, v.size()) += v;
}

}  // namespace

void LmSettings::validate() const {
  if (max_iterations <= 0 || !(initial_lambda > 0.0) || !(lambda_up > 1.0) || !(lambda_down > 0.0) ||
      !(lambda_down < 1.0) || !(cost_tolerance > 0.0) || !(step_tolerance > 0.0)) {
    throw std::invalid_argument("LmSettings: values must be positive with lambda_up > 1 > lambda_down > 0");
  }
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kAlreadyOptimal:
      return "already_optimal";
    case Termination::kCostTolerance:
      return "cost_tolerance";
    case Termination::kStepTolerance:
      return "step_tolerance";
    case Termination::kMaxIterations:
      return "max_iterations";
    case Termination::kLambdaExhausted:
      return "lambda_exhausted";
  }
  return "unknown";
}

int OptimizationReport::accepted_steps() const {
  return static_cast<int>(
      std::count_if(iterations.begin(), iterations.end(), [](const IterationRecord& r) { return r.accepted; }));
}

void OptimizationReport::write_csv(std::ostream& os) const {
  os << "iteration,cost,lambda,step_norm,accepted\n";
  os << fmt::format("0,{:.12e},,,1\n", initial_cost);
  for (const auto& it : iterations) {
    os << fmt::format("{},{:.12e},{:.6e},{:.6e},{}\n", it.iteration, it.cost, it.lambda, it.step_norm,
                      it.accepted ? 1 : 0);
  }
}

Eigen::VectorXd solve_normal_equations(const Eigen::SparseMatrix<double>& hessian, const Eigen::VectorXd& gradient,
                                       double lambda) {
  if (lambda < 0.0) {
    throw std::invalid_argument("solve_normal_equations: lambda must be non-negative");
  }
  if (hessian.rows() != hessian.cols() || hessian.rows() != gradient.size()) {
    throw std::invalid_argument("solve_normal_equations: dimension mismatch");
  }
  Eigen::SparseMatrix<double> damped = hessian;
  if (lambda > 0.0) {
    for (int k = 0; k < damped.rows(); ++k) {
      damped.coeffRef(k, k) += lambda * hessian.coeff(k, k);
    }
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(damped);
  if (ldlt.info() != Eigen::Success || (damped.rows() > 0 && !(ldlt.vectorD().minCoeff() > 0.0))) {
    throw NonPositiveDefiniteError("normal equations are not positive definite");
  }
  Eigen::VectorXd step = ldlt.solve(-gradient);
  // one round of iterative refinement
  const Eigen::VectorXd residual = -gradient - damped * step;
  step += ldlt.solve(residual);
  if (!step.allFinite()) {
    throw NonPositiveDefiniteError("normal equations produced a non-finite step");
  }
  return step;
}

VariableLayout::VariableLayout(const PoseGraph& graph) {
  num_poses_ = static_cast<int>(graph.robot_vertices().size());
  for (const auto& n : graph.uwb_vertices()) {
    node_ids_.push_back(n.id);
  }
  dimension_ = 3 * std::max(0, num_poses_ - 1) + 2 * static_cast<int>(node_ids_.size());
}

int VariableLayout::node_offset(int id) const {
  const auto it = std::find(node_ids_.begin(), node_ids_.end(), id);
  if (it == node_ids_.end()) {
    throw GraphError(fmt::format("unknown UWB vertex {}", id));
  }
  return 3 * std::max(0, num_poses_ - 1) + 2 * static_cast<int>(it - node_ids_.begin());
}

NormalEquations build_normal_equations(const PoseGraph& graph, const VariableLayout& layout,
                                       const Assignment& assignment) {
  const int n = layout.dimension();
  NormalEquations ne;
  ne.gradient = Eigen::VectorXd::Zero(n);
  std::vector<Triplet> triplets;
  triplets.reserve(graph.odometry_edges().size() * 36 + graph.loop_edges().size() * 36 +
                   graph.range_edges().size() * 25);
  const auto& poses = assignment.poses;

  auto relative_term = [&](int i, int j, const Pose2& z, const Mat3& info) {
    const RelativeLinearization lin = linearize_relative(z, poses[i], poses[j]);
    ne.cost += lin.residual.dot(info * lin.residual);
    const int oi = layout.pose_offset(i);
    const int oj = layout.pose_offset(j);
    const Mat3 ji_t_info = lin.jacobian_i.transpose() * info;
    const Mat3 jj_t_info = lin.jacobian_j.transpose() * info;
    push_block(triplets, oi, oi, Mat3(ji_t_info * lin.jacobian_i));
    push_block(triplets, oi, oj, Mat3(ji_t_info * lin.jacobian_j));
    push_block(triplets, oj, oi, Mat3(jj_t_info * lin.jacobian_i));
    push_block(triplets, oj, oj, Mat3(jj_t_info * lin.jacobian_j));
    add_segment(ne.gradient, oi, Vec3(ji_t_info * lin.residual));
    add_segment(ne.gradient, oj, Vec3(jj_t_info * lin.residual));
  };

  for (const auto& e : graph.loop_edges()) {
    relative_term(e.i, e.j, e.measurement, e.information);
  }
  for (const auto& e : graph.odometry_edges()) {
    relative_term(e.i, e.j, e.measurement, e.information);
  }
  for (const auto& e : graph.range_edges()) {
    const Vec2& node = assignment.nodes.at(e.node_id);
    const RangeLinearization lin = linearize_range(e, poses[e.i], node);
    ne.cost += e.precision * lin.residual * lin.residual;
    if (lin.degenerate) {
      continue;
    }
    const int op = layout.pose_offset(e.i);
    const int on = layout.node_offset(e.node_id);
    const Vec3 jp = lin.jacobian_pose.transpose();
    const Eigen::Vector2d jn = lin.jacobian_node.transpose();
    push_block(triplets, op, op, Mat3(e.precision * jp * jp.transpose()));
    push_block(triplets, op, on, Mat32(e.precision * jp * jn.transpose()));
    push_block(triplets, on, op, Mat23(e.precision * jn * jp.transpose()));
    push_block(triplets, on, on, Mat2(e.precision * jn * jn.transpose()));
    add_segment(ne.gradient, op, Vec3(e.precision * lin.residual * jp));
    add_segment(ne.gradient, on, Vec2(e.precision * lin.residual * jn));
  }
  ne.hessian.resize(n, n);
  ne.hessian.setFromTriplets(triplets.begin(), triplets.end());
  return ne;
}

Assignment apply_step(const VariableLayout& layout, const Assignment& assignment, const Eigen::VectorXd& step) {
  Assignment out = assignment;
  for (std::size_t k = 1; k < out.poses.size(); ++k) {
    const int o = layout.pose_offset(static_cast<int>(k));
    const Pose2& p = assignment.poses[k];
    out.poses[k] = Pose2(p.x() + step[o], p.y() + step[o + 1], p.theta() + step[o + 2]);
  }
  for (auto& [id, pos] : out.nodes) {
    const int o = layout.node_offset(id);
    pos += step.segment<2>(o);
  }
  return out;
}

OptimizationResult optimize(const PoseGraph& graph, const Assignment& initial, const LmSettings& settings) {
  settings.validate();
  const VariableLayout layout(graph);
  OptimizationResult result;
  result.assignment = initial;
  auto& report = result.report;

  double cost = total_cost(graph, result.assignment);
  if (!std::isfinite(cost)) {
    throw DivergedNaNError("initial cost is not finite");
  }
  report.initial_cost = cost;
  report.final_cost = cost;
  if (cost == 0.0 || layout.dimension() == 0) {
    report.termination = Termination::kAlreadyOptimal;
    return result;
  }

  double lambda = settings.initial_lambda;
  NormalEquations ne = build_normal_equations(graph, layout, result.assignment);
  report.termination = Termination::kMaxIterations;
  for (int iter = 1; iter <= settings.max_iterations; ++iter) {
    IterationRecord rec;
    rec.iteration = iter;
    rec.lambda = lambda;
    rec.cost = cost;

    Eigen::VectorXd step;
    try {
      step = solve_normal_equations(ne.hessian, ne.gradient, lambda);
    } catch (const NonPositiveDefiniteError&) {
      report.iterations.push_back(rec);
      lambda *= settings.lambda_up;
      if (lambda > settings.max_lambda) {
        throw NonPositiveDefiniteError("normal equations unsolvable even at maximum damping");
      }
      continue;
    }
    rec.step_norm = step.norm();
    if (rec.step_norm < settings.step_tolerance) {
      report.iterations.push_back(rec);
      report.termination = Termination::kStepTolerance;
      break;
    }

    Assignment candidate = apply_step(layout, result.assignment, step);
    const double new_cost = total_cost(graph, candidate);
    if (std::isfinite(new_cost) && new_cost < cost) {
      const double relative_change = (cost - new_cost) / cost;
      cost = new_cost;
      result.assignment = std::move(candidate);
      rec.cost = cost;
      rec.accepted = true;
      report.iterations.push_back(rec);
      lambda = std::max(lambda * settings.lambda_down, 1e-15);
      if (relative_change < settings.cost_tolerance || cost == 0.0) {
        report.termination = Termination::kCostTolerance;
        break;
      }
      ne = build_normal_equations(graph, layout, result.assignment);
    } else {
      report.iterations.push_back(rec);
      lambda *= settings.lambda_up;
      if (lambda > settings.max_lambda) {
        report.termination = Termination::kLambdaExhausted;
        break;
      }
    }
  }
  report.final_cost = cost;
  return result;
}

}  // namespace uwbslam
