#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "uwbslam/geometry.hpp"
#include "uwbslam/kdtree.hpp"

namespace uwbslam {

/// Polar LiDAR scan. Invalid returns (no echo, beyond range_max) are +infinity.
struct Scan {
  double stamp = 0.0;
  double angle_min = 0.0;
  double angle_increment = 0.0;
  double range_max = 0.0;
  std::vector<double> ranges;

  double beam_angle(std::size_t k) const { return angle_min + static_cast<double>(k) * angle_increment; }
  bool is_valid(std::size_t k) const;
  /// Angle spanned from the first to the last beam.
  double span() const;
};

enum class Frame { kSensor, kWorld };

struct PointCloud2 {
  std::vector<Vec2> points;
  Frame frame = Frame::kWorld;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Projects every valid beam through the pose into the pose's parent frame.
PointCloud2 project(const Scan& scan, const Pose2& pose);

/// Re-expresses every point through a rigid transform.
PointCloud2 transform_cloud(const PointCloud2& cloud, const Transform2& t, Frame frame);

/// One centroid per occupied voxel, output ordered by voxel key (x-major).
PointCloud2 voxel_filter(const PointCloud2& cloud, double voxel_size);

struct StatisticalFilterResult {
  PointCloud2 cloud;
  bool too_small = false;  // cloud had <= k points and was returned unchanged
};

/// Removes points whose mean distance to their k nearest neighbours exceeds
/// mean + stddev_mult * stddev of that statistic over the cloud.
StatisticalFilterResult statistical_filter(const PointCloud2& cloud, std::size_t k, double stddev_mult);

/// Keeps points with at least min_neighbors other points within radius.
PointCloud2 radius_filter(const PointCloud2& cloud, double radius, std::size_t min_neighbors);

struct FilterSettings {
  double voxel_size = 0.05;
  std::size_t statistical_k = 10;
  double statistical_stddev_mult = 1.0;
  double radius = 0.3;
  std::size_t radius_min_neighbors = 2;
};

/// voxel -> statistical -> radius.
PointCloud2 filter_chain(const PointCloud2& cloud, const FilterSettings& settings);

/// Nearest member of an indexed cloud and its distance. Throws EmptyCloudError.
struct NearestResult {
  Vec2 point;
  double distance = 0.0;
  std::size_t index = 0;
};
NearestResult nearest_neighbor(const KdTree2& index, const Vec2& query);

/// Plain text, one "x y" pair per line.
void write_cloud(std::ostream& os, const PointCloud2& cloud);
PointCloud2 read_cloud(std::istream& is, Frame frame = Frame::kWorld);

}  // namespace uwbslam
