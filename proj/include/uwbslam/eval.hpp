#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uwbslam/geometry.hpp"
#include "uwbslam/occupancy.hpp"
#include "uwbslam/simulator.hpp"

namespace uwbslam {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingColumnError : public EvalError {
 public:
  using EvalError::EvalError;
};

class NoOccupiedCellsError : public EvalError {
 public:
  using EvalError::EvalError;
};

class LengthMismatchError : public EvalError {
 public:
  using EvalError::EvalError;
};

struct PairError {
  std::string label;
  double estimated = 0.0;
  double truth = 0.0;
  double error = 0.0;  // absolute
};

struct MappingErrorReport {
  std::vector<PairError> per_pair;
  double mean_error = 0.0;
};

/// |estimated - true| distance for every pair, averaged.
MappingErrorReport mapping_error(const std::map<int, Vec2>& estimated_centers, std::span<const ColumnPair> pairs);

struct CenterExtraction {
  double occupied_threshold = 0.65;
  double search_radius = 1.0;
};

/// Centroid of the occupied cells within the search radius of each seed, keyed like the seeds.
std::map<int, Vec2> extract_column_centers(const OccupancyGrid& grid, const std::map<int, Vec2>& seeds,
                                           const CenterExtraction& settings = {});

/// Least-squares rigid transform mapping estimated positions onto truth positions.
Transform2 align_trajectories(std::span<const Pose2> estimated, std::span<const Pose2> truth);

/// Position RMSE after the least-squares rigid alignment of estimated onto truth.
double trajectory_ate(std::span<const Pose2> estimated, std::span<const Pose2> truth);

/// Ground-truth poses at the given stamps (exact stamp matches, to the microsecond).
std::vector<Pose2> truth_at(const GroundTruth& truth, std::span<const double> stamps);

struct EvaluationRow {
  std::string label;
  MappingErrorReport mapping;
  double ate = 0.0;
};

/// Header "label,mean_error,ate,<pair labels...>", one row per evaluation.
void write_evaluation_csv(std::ostream& os, std::span<const EvaluationRow> rows);

/// Per-pair table: "pair,estimated,truth,error" then a "mean" row.
void write_mapping_csv(std::ostream& os, const MappingErrorReport& report);

}  // namespace uwbslam
