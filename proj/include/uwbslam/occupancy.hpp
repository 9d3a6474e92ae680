#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uwbslam/geometry.hpp"
#include "uwbslam/pointcloud.hpp"

namespace uwbslam {

class OutOfBoundsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

/// Inverse sensor model in log-odds.
struct SensorModel {
  double l_occ = std::log(0.7 / 0.3);
  double l_free = std::log(0.3 / 0.7);
  double l_min = -5.0;
  double l_max = 5.0;
};

/// Log-odds occupancy grid. Cell (0, 0) has its lower-left corner at origin.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(double resolution, const Vec2& origin, int width, int height);

  /// Grid covering the bounding box of the positions padded by `padding` on each side.
  static OccupancyGrid covering(std::span<const Pose2> trajectory, double padding, double resolution);

  double resolution() const { return resolution_; }
  const Vec2& origin() const { return origin_; }
  int width() const { return width_; }
  int height() const { return height_; }

  bool contains(const Cell& c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  /// Cell containing a world point (may be outside the grid).
  Cell cell_of(const Vec2& world) const;
  Vec2 cell_center(const Cell& c) const;

  double logodds(const Cell& c) const { return logodds_[flat(c)]; }
  double probability(const Cell& c) const;
  bool touched(const Cell& c) const { return touched_[flat(c)] != 0; }

  /// Adds delta and clamps into [l_min, l_max].
  void update(const Cell& c, double delta, const SensorModel& model);
  /// Direct write used when reloading a rendered map.
  void set_logodds(const Cell& c, double value, bool touched);

 private:
  std::size_t flat(const Cell& c) const {
    return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c.x);
  }

  double resolution_ = 0.05;
  Vec2 origin_ = Vec2::Zero();
  int width_ = 0;
  int height_ = 0;
  std::vector<double> logodds_;
  std::vector<std::uint8_t> touched_;
};

/// Bresenham cells from start's cell towards end's cell, excluding the end cell.
/// Throws OutOfBoundsError if either endpoint lies outside the grid.
std::vector<Cell> trace_ray(const OccupancyGrid& grid, const Vec2& start, const Vec2& end);
/// Same walk in integer cell coordinates (no bounds check).
std::vector<Cell> bresenham_cells(const Cell& start, const Cell& end);

/// Binary Bayes update for every beam: free along the ray, occupied at the endpoint.
/// Beams without a valid return clear cells up to range_max only.
void integrate_scan(OccupancyGrid& grid, const Pose2& pose, const Scan& scan, const SensorModel& model = {});

/// Binary PGM: untouched 205, touched round(255 * (1 - p)); first row is the max-y edge.
std::string render_pgm(const OccupancyGrid& grid);

struct MapMetadata {
  double resolution = 0.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  int width = 0;
  int height = 0;
  double occupied_thresh = 0.65;
  double free_thresh = 0.25;
  double unknown_value = 205;
  SensorModel model;
};

MapMetadata metadata_for(const OccupancyGrid& grid, const SensorModel& model);
/// "key: value" lines.
std::string render_metadata(const MapMetadata& meta);
MapMetadata parse_metadata(const std::string& text);

/// Rebuilds an approximate grid (8-bit probability resolution) from a rendered map.
OccupancyGrid grid_from_pgm(const std::string& pgm_bytes, const MapMetadata& meta);

}  // namespace uwbslam
