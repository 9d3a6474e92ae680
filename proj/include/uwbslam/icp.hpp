#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "uwbslam/geometry.hpp"
#include "uwbslam/pointcloud.hpp"

namespace uwbslam {

class IcpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TooFewCorrespondencesError : public IcpError {
 public:
  using IcpError::IcpError;
};

class DegenerateGeometryError : public IcpError {
 public:
  using IcpError::IcpError;
};

struct IcpSettings {
  int max_iterations = 300;
  double outlier_distance = 0.1;        // m, pairs farther apart are discarded
  double epsilon_translation = 1e-4;    // m
  double epsilon_rotation = 1e-4;       // rad
  std::size_t min_correspondences = 50;
  bool record_trace = false;

  void validate() const;
};

/// Objective of one iteration's fixed correspondence set, before and after its alignment step.
struct IcpIterationTrace {
  std::size_t correspondences = 0;
  double objective_before = 0.0;
  double objective_after = 0.0;
};

struct IcpResult {
  Transform2 transform;  // maps source points onto the target
  double fitness = 0.0;  // mean squared inlier distance after registration (m^2)
  int iterations_used = 0;
  bool converged = false;
  std::size_t correspondence_count = 0;
  std::vector<IcpIterationTrace> trace;
};

using PointPair = std::pair<Vec2, Vec2>;  // (source, target)

/// Closed-form least-squares rigid transform for fixed pairs.
/// Throws DegenerateGeometryError if fewer than two pairs or the source points are collinear.
Transform2 best_rigid_transform(std::span<const PointPair> pairs);

/// Mean of |T(source) - target|^2 over the pairs.
double alignment_objective(std::span<const PointPair> pairs, const Transform2& t);

/// Point-to-point ICP with per-pair outlier rejection. The target is indexed once.
IcpResult icp_align(const PointCloud2& source, const PointCloud2& target, const Transform2& initial_guess,
                    const IcpSettings& settings = {});
IcpResult icp_align(const PointCloud2& source, const KdTree2& target_index, const Transform2& initial_guess,
                    const IcpSettings& settings = {});

}  // namespace uwbslam
