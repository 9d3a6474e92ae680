#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uwbslam/graph.hpp"
#include "uwbslam/occupancy.hpp"
#include "uwbslam/optimizer.hpp"
#include "uwbslam/pointcloud.hpp"
#include "uwbslam/sensor_log.hpp"
#include "uwbslam/submap.hpp"

namespace uwbslam {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public PipelineError {
 public:
  using PipelineError::PipelineError;
};

struct PipelineConfig {
  double epsilon = 9.0;   // m of travel per submap
  double sigma = 0.1;     // m^2 loop fitness gate
  double icp_d = 0.1;     // m outlier distance
  int icp_iterations = 300;
  std::optional<std::vector<int>> uwb_node_filter;  // unset: all nodes; empty: none
  bool stage1_only = false;
  bool use_loops = true;

  double vertex_translation = 0.1;  // m of odometry per graph vertex
  double vertex_rotation = 0.1;     // rad
  double range_window = 0.5;        // s between a range and its vertex
  double loop_search_radius = 5.0;
  int loop_min_index_gap = 2;
  std::size_t icp_min_correspondences = 50;

  OdometryNoise odometry_noise;
  RangeNoise range_noise;
  LoopNoise loop_noise;
  FilterSettings filters;
  SensorModel sensor_model;
  double grid_resolution = 0.05;
  LmSettings lm;

  void validate() const;
  bool uses_node(int id) const;
  LoopSettings loop_settings() const;
};

/// Overrides defaults with the keys present in a JSON object. Unknown keys are rejected.
PipelineConfig load_config(std::istream& is, PipelineConfig base = {});

struct UwbInitResult {
  Vec2 position = Vec2::Zero();
  bool fallback = false;  // trilateration was not usable
  std::string reason;
};

/// Linear trilateration over every measurement refined by a few Gauss-Newton steps.
/// Falls back to the first pose pushed forward by its range along the heading when there are
/// fewer than three ranges or under 1 m of baseline. Collinear poses solve along the line and
/// take the mirror image on the left of travel (also flagged as a fallback).
UwbInitResult initialize_uwb(std::span<const Pose2> poses, std::span<const double> distances);

/// Odometry records kept as graph vertices: the first, then one per vertex_translation or
/// vertex_rotation of motion since the last kept record.
std::vector<std::size_t> select_vertices(std::span<const OdomRecord> odometry, double translation, double rotation);

/// Odometry pose at a stamp, linearly interpolated (clamped to the log's ends).
Pose2 odometry_at(std::span<const OdomRecord> odometry, double stamp);

/// Index of the stamp nearest to t in an increasing sequence (ties go to the earlier one).
std::size_t nearest_stamp(std::span<const double> stamps, double t);

struct Stage1Result {
  PoseGraph graph;  // holds the optimized estimates
  std::vector<double> stamps;
  std::vector<Pose2> dead_reckoning;
  std::vector<Pose2> poses;
  std::map<int, Vec2> landmarks;
  std::map<int, UwbInitResult> landmark_init;
  OptimizationReport report;
  int dropped_ranges = 0;
};

struct Stage2Result {
  PoseGraph graph;
  std::vector<Pose2> poses;
  std::map<int, Vec2> landmarks;
  std::vector<Submap> submaps;
  std::vector<LoopCandidate> candidates;
  std::optional<OptimizationReport> report;  // unset when no loop was accepted
  int accepted_loops() const;
};

Stage1Result run_stage1(const SensorLog& log, const PipelineConfig& config);

/// Pose of every scan: its nearest vertex's estimate moved by the odometry between the two stamps.
std::vector<Pose2> scan_poses(const SensorLog& log, std::span<const double> vertex_stamps,
                              std::span<const Pose2> vertex_poses);

/// Submaps on the stage-1 trajectory, loop detection and re-optimization from stage 1.
/// With no accepted loop the stage-1 estimate is returned unchanged.
Stage2Result run_stage2(const Stage1Result& stage1, const SensorLog& log, const PipelineConfig& config);

/// Same, with externally supplied candidates (their accepted flags are re-gated against sigma).
Stage2Result run_stage2_with_candidates(const Stage1Result& stage1, std::vector<Submap> submaps,
                                        std::vector<LoopCandidate> candidates, const PipelineConfig& config);

/// Occupancy grid of every scan along a trajectory.
OccupancyGrid build_map(const SensorLog& log, std::span<const double> vertex_stamps,
                        std::span<const Pose2> vertex_poses, const PipelineConfig& config);

struct RunReport {
  double stage1_initial_cost = 0.0;
  double stage1_final_cost = 0.0;
  int stage1_iterations = 0;
  std::string stage1_termination;
  bool stage2_run = false;
  double stage2_initial_cost = 0.0;
  double stage2_final_cost = 0.0;
  int stage2_iterations = 0;
  std::string stage2_termination;
  int vertices = 0;
  int range_edges = 0;
  int dropped_ranges = 0;
  int submaps = 0;
  int loop_candidates = 0;
  int loops_accepted = 0;
  int landmark_fallbacks = 0;
  // wall-clock seconds, reported on the console only
  double stage1_seconds = 0.0;
  double stage2_seconds = 0.0;
  double map_seconds = 0.0;

  /// "key,value" rows; timing is left out so the file is reproducible.
  void write_csv(std::ostream& os) const;
};

struct RunResult {
  std::vector<double> stamps;
  std::vector<Pose2> trajectory;
  std::map<int, Vec2> landmarks;
  OccupancyGrid grid;
  Stage1Result stage1;
  std::optional<Stage2Result> stage2;
  RunReport report;
};

RunResult run_full(const SensorLog& log, const PipelineConfig& config);

/// "stamp x y theta" per vertex.
void write_trajectory(std::ostream& os, std::span<const double> stamps, std::span<const Pose2> poses);
/// "id x y" per landmark.
void write_landmarks(std::ostream& os, const std::map<int, Vec2>& landmarks);

struct TrajectoryFile {
  std::vector<double> stamps;
  std::vector<Pose2> poses;
};
TrajectoryFile read_trajectory(std::istream& is);
std::map<int, Vec2> read_landmarks(std::istream& is);

}  // namespace uwbslam
