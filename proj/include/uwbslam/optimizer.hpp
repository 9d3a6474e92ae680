#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "uwbslam/graph.hpp"

namespace uwbslam {

class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normal equations stay singular even with the largest damping tried.
class NonPositiveDefiniteError : public OptimizerError {
 public:
  using OptimizerError::OptimizerError;
};

/// Residuals or cost became NaN/inf.
class DivergedNaNError : public OptimizerError {
 public:
  using OptimizerError::OptimizerError;
};

struct LmSettings {
  int max_iterations = 100;
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double cost_tolerance = 1e-9;  // relative
  double step_tolerance = 1e-9;  // absolute, Euclidean norm of the step
  double max_lambda = 1e16;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;  // cost after this iteration (unchanged when rejected)
  double lambda = 0.0;  // damping used for this iteration's solve
  double step_norm = 0.0;
  bool accepted = false;
};

enum class Termination { kAlreadyOptimal, kCostTolerance, kStepTolerance, kMaxIterations, kLambdaExhausted };

std::string to_string(Termination t);

struct OptimizationReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<IterationRecord> iterations;
  Termination termination = Termination::kMaxIterations;

  int accepted_steps() const;
  /// CSV with header "iteration,cost,lambda,step_norm,accepted".
  void write_csv(std::ostream& os) const;
};

struct OptimizationResult {
  Assignment assignment;
  OptimizationReport report;
};

/// Solves (H + lambda * diag(H)) * step = -g with a sparse LDL^T factorization and
/// an approximate-minimum-degree ordering. Throws NonPositiveDefiniteError.
Eigen::VectorXd solve_normal_equations(const Eigen::SparseMatrix<double>& hessian, const Eigen::VectorXd& gradient,
                                       double lambda);

/// Gauss-Newton system of the graph at an assignment, with the anchor pose eliminated.
struct NormalEquations {
  Eigen::SparseMatrix<double> hessian;
  Eigen::VectorXd gradient;
  double cost = 0.0;
};

/// Maps vertices to columns of the reduced system (anchor pose removed).
class VariableLayout {
 public:
  explicit VariableLayout(const PoseGraph& graph);

  int pose_offset(int index) const { return index == 0 ? -1 : 3 * (index - 1); }
  int node_offset(int id) const;
  int dimension() const { return dimension_; }
  const std::vector<int>& node_ids() const { return node_ids_; }

 private:
  int num_poses_ = 0;
  std::vector<int> node_ids_;
  int dimension_ = 0;
};

NormalEquations build_normal_equations(const PoseGraph& graph, const VariableLayout& layout,
                                       const Assignment& assignment);

/// Additive update on (x, y, theta) with heading re-wrapped; node positions additive.
Assignment apply_step(const VariableLayout& layout, const Assignment& assignment, const Eigen::VectorXd& step);

/// Levenberg-Marquardt over robot poses and UWB positions, robot vertex 0 held fixed.
OptimizationResult optimize(const PoseGraph& graph, const Assignment& initial, const LmSettings& settings = {});

}  // namespace uwbslam
