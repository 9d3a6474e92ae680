#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uwbslam/geometry.hpp"
#include "uwbslam/sensor_log.hpp"

namespace uwbslam {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrajectoryOutOfBoundsError : public SimulationError {
 public:
  using SimulationError::SimulationError;
};

struct Segment {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
};

struct Column {
  int label = 0;
  Vec2 center = Vec2::Zero();
  double radius = 0.3;
};

struct UwbNode {
  int id = 0;
  Vec2 position = Vec2::Zero();
};

struct World {
  std::vector<Segment> segments;
  std::vector<Column> columns;
  std::vector<UwbNode> uwb_nodes;
  Vec2 bounds_min = Vec2::Zero();
  Vec2 bounds_max = Vec2(20.0, 20.0);

  bool inside(const Vec2& p) const;
  void validate() const;
};

struct NoiseModel {
  double odom_trans_sigma = 0.01;  // m per 0.1 m (or 0.1 rad) of motion
  double odom_rot_sigma = 0.005;   // rad per 0.1 m (or 0.1 rad) of motion
  double uwb_sigma = 0.1;
  double uwb_nlos_prob = 0.5;  // chance of a biased range when the line of sight is blocked
  double uwb_nlos_bias = 0.3;
  double lidar_sigma = 0.01;
  std::uint64_t seed = 0;

  static NoiseModel zero(std::uint64_t seed = 0);
  void validate() const;
};

/// Sensor rates in Hz. Each must divide the 100 Hz simulation clock.
struct SensorRates {
  double odom_hz = 10.0;
  double lidar_hz = 10.0;
  double uwb_hz = 5.0;
};

struct LidarSpec {
  double angle_min = -120.0 * 3.14159265358979323846 / 180.0;
  double angle_increment = 0.36 * 3.14159265358979323846 / 180.0;
  int beams = 667;
  double range_max = 5.6;
};

/// Drive-and-turn tour over a closed waypoint cycle: rotate in place towards the next
/// waypoint, then drive straight to it.
struct TrajectorySpec {
  std::vector<Vec2> waypoints;
  double start_heading = 0.0;
  double speed = 0.2;       // m/s
  double turn_rate = 0.5;   // rad/s
  double duration = 480.0;  // s
};

struct StampedPose {
  double stamp = 0.0;
  Pose2 pose;
};

struct ColumnPair {
  std::string label;  // e.g. "L12"
  int a = 0;
  int b = 0;
  double distance = 0.0;
};

struct GroundTruth {
  std::vector<StampedPose> trajectory;  // at odometry stamps
  std::vector<UwbNode> nodes;
  std::vector<Column> columns;
  std::vector<ColumnPair> column_pairs;
};

struct SimulationOutput {
  SensorLog log;
  GroundTruth truth;
};

struct Scenario {
  World world;
  TrajectorySpec trajectory;
};

/// Nearest hit of a ray with any wall or column, or nullopt beyond max_range.
std::optional<double> raycast(const World& world, const Vec2& origin, double angle, double max_range);

/// True when the open segment a-b crosses a wall or a column.
bool line_of_sight_blocked(const World& world, const Vec2& a, const Vec2& b);

/// Ground-truth poses of a trajectory spec sampled on the 100 Hz clock.
std::vector<StampedPose> sample_trajectory(const TrajectorySpec& spec);

SimulationOutput generate_log(const World& world, const TrajectorySpec& trajectory, const SensorRates& rates,
                              const LidarSpec& lidar, const NoiseModel& noise);

/// 20 m x 20 m walled room, eight columns in two rows of four, UWB nodes near the corners,
/// figure-eight tour through the central aisle.
Scenario standard_scenario(double duration = 480.0, int num_nodes = 4);

/// Column-pair distances used by the mapping-error metric (L12, L34, L56, L78, L13, L35, L57, L24, L46, L68).
std::vector<ColumnPair> column_pairs(const std::vector<Column>& columns);

void write_ground_truth(std::ostream& os, const GroundTruth& truth);
GroundTruth read_ground_truth(std::istream& is);

}  // namespace uwbslam
