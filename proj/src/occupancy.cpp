#include "uwbslam/occupancy.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace uwbslam {
namespace {

// Walks from start towards end along the major axis, ties on the minor axis round towards start.
void bresenham_into(const Cell& start, const Cell& end, std::vector<Cell>& out) {
  out.clear();
  int x = start.x;
  int y = start.y;
  const int dx = std::abs(end.x - start.x);
  const int dy = std::abs(end.y - start.y);
  const int sx = end.x >= start.x ? 1 : -1;
  const int sy = end.y >= start.y ? 1 : -1;
  if (dx >= dy) {
    long err = 2L * dy - dx;
    for (int i = 0; i < dx; ++i) {
      out.push_back({x, y});
      if (err > 0) {
        y += sy;
        err -= 2L * dx;
      }
      err += 2L * dy;
      x += sx;
    }
  } else {
    long err = 2L * dx - dy;
    for (int i = 0; i < dy; ++i) {
      out.push_back({x, y});
      if (err > 0) {
        x += sx;
        err -= 2L * dy;
      }
      err += 2L * dx;
      y += sy;
    }
  }
}

double probability_from_logodds(double l) { return 1.0 - 1.0 / (1.0 + std::exp(l)); }

}  // namespace

OccupancyGrid::OccupancyGrid(double resolution, const Vec2& origin, int width, int height)
    : resolution_(resolution), origin_(origin), width_(width), height_(height) {
  if (!(resolution > 0.0) || width <= 0 || height <= 0) {
    throw std::invalid_argument("OccupancyGrid: resolution and size must be positive");
  }
  logodds_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0);
  touched_.assign(logodds_.size(), 0);
}

OccupancyGrid OccupancyGrid::covering(std::span<const Pose2> trajectory, double padding, double resolution) {
  if (trajectory.empty()) {
    throw std::invalid_argument("OccupancyGrid::covering: empty trajectory");
  }
  Vec2 lo = trajectory.front().translation();
  Vec2 hi = lo;
  for (const auto& p : trajectory) {
    lo = lo.cwiseMin(p.translation());
    hi = hi.cwiseMax(p.translation());
  }
  lo.array() -= padding;
  hi.array() += padding;
  const Vec2 origin(std::floor(lo.x() / resolution) * resolution, std::floor(lo.y() / resolution) * resolution);
  const int width = static_cast<int>(std::ceil((hi.x() - origin.x()) / resolution)) + 1;
  const int height = static_cast<int>(std::ceil((hi.y() - origin.y()) / resolution)) + 1;
  return {resolution, origin, width, height};
}

Cell OccupancyGrid::cell_of(const Vec2& world) const {
  return {static_cast<int>(std::floor((world.x() - origin_.x()) / resolution_)),
          static_cast<int>(std::floor((world.y() - origin_.y()) / resolution_))};
}

Vec2 OccupancyGrid::cell_center(const Cell& c) const {
  return {origin_.x() + (c.x + 0.5) * resolution_, origin_.y() + (c.y + 0.5) * resolution_};
}

double OccupancyGrid::probability(const Cell& c) const { return probability_from_logodds(logodds(c)); }

void OccupancyGrid::update(const Cell& c, double delta, const SensorModel& model) {
  const std::size_t k = flat(c);
  logodds_[k] = std::clamp(logodds_[k] + delta, model.l_min, model.l_max);
  touched_[k] = 1;
}

void OccupancyGrid::set_logodds(const Cell& c, double value, bool touched) {
  const std::size_t k = flat(c);
  logodds_[k] = value;
  touched_[k] = touched ? 1 : 0;
}

std::vector<Cell> bresenham_cells(const Cell& start, const Cell& end) {
  std::vector<Cell> out;
  bresenham_into(start, end, out);
  return out;
}

std::vector<Cell> trace_ray(const OccupancyGrid& grid, const Vec2& start, const Vec2& end) {
  const Cell a = grid.cell_of(start);
  const Cell b = grid.cell_of(end);
  if (!grid.contains(a) || !grid.contains(b)) {
    throw OutOfBoundsError(fmt::format("ray ({:.3f},{:.3f})->({:.3f},{:.3f}) leaves the grid", start.x(),
                                       start.y(), end.x(), end.y()));
  }
  return bresenham_cells(a, b);
}

void integrate_scan(OccupancyGrid& grid, const Pose2& pose, const Scan& scan, const SensorModel& model) {
  const Vec2 origin = pose.translation();
  const Cell start = grid.cell_of(origin);
  if (!grid.contains(start)) {
    return;
  }
  std::vector<Cell> cells;
  cells.reserve(256);
  for (std::size_t k = 0; k < scan.ranges.size(); ++k) {
    const bool hit = scan.is_valid(k);
    const double r = hit ? scan.ranges[k] : scan.range_max;
    const double a = scan.beam_angle(k);
    const Cell end = grid.cell_of(pose.transform_point({r * std::cos(a), r * std::sin(a)}));
    if (!grid.contains(end)) {
      continue;
    }
    bresenham_into(start, end, cells);
    for (const Cell& c : cells) {
      grid.update(c, model.l_free, model);
    }
    if (hit) {
      grid.update(end, model.l_occ, model);
    }
  }
}

std::string render_pgm(const OccupancyGrid& grid) {
  std::string header = fmt::format("P5\n{} {}\n255\n", grid.width(), grid.height());
  std::string out = header;
  out.reserve(header.size() + static_cast<std::size_t>(grid.width()) * static_cast<std::size_t>(grid.height()));
  for (int row = 0; row < grid.height(); ++row) {
    const int y = grid.height() - 1 - row;
    for (int x = 0; x < grid.width(); ++x) {
      const Cell c{x, y};
      unsigned char v = 205;
      if (grid.touched(c)) {
        v = static_cast<unsigned char>(std::lround(255.0 * (1.0 - grid.probability(c))));
      }
      out.push_back(static_cast<char>(v));
    }
  }
  return out;
}

MapMetadata metadata_for(const OccupancyGrid& grid, const SensorModel& model) {
  MapMetadata m;
  m.resolution = grid.resolution();
  m.origin_x = grid.origin().x();
  m.origin_y = grid.origin().y();
  m.width = grid.width();
  m.height = grid.height();
  m.model = model;
  return m;
}

std::string render_metadata(const MapMetadata& m) {
  return fmt::format(
      "image: map.pgm\n"
      "resolution: {:.9g}\n"
      "origin_x: {:.9f}\n"
      "origin_y: {:.9f}\n"
      "width: {}\n"
      "height: {}\n"
      "occupied_thresh: {:.6g}\n"
      "free_thresh: {:.6g}\n"
      "unknown_value: {:.0f}\n"
      "l_occ: {:.9g}\n"
      "l_free: {:.9g}\n"
      "l_min: {:.9g}\n"
      "l_max: {:.9g}\n",
      m.resolution, m.origin_x, m.origin_y, m.width, m.height, m.occupied_thresh, m.free_thresh, m.unknown_value,
      m.model.l_occ, m.model.l_free, m.model.l_min, m.model.l_max);
}

MapMetadata parse_metadata(const std::string& text) {
  MapMetadata m;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      continue;
    }
    const std::string key = line.substr(0, colon);
    const std::string value = line.substr(colon + 1);
    auto num = [&] { return std::stod(value); };
    if (key == "resolution") m.resolution = num();
    else if (key == "origin_x") m.origin_x = num();
    else if (key == "origin_y") m.origin_y = num();
    else if (key == "width") m.width = static_cast<int>(num());
    else if (key == "height") m.height = static_cast<int>(num());
    else if (key == "occupied_thresh") m.occupied_thresh = num();
    else if (key == "free_thresh") m.free_thresh = num();
    else if (key == "unknown_value") m.unknown_value = num();
    else if (key == "l_occ") m.model.l_occ = num();
    else if (key == "l_free") m.model.l_free = num();
    else if (key == "l_min") m.model.l_min = num();
    else if (key == "l_max") m.model.l_max = num();
  }
  if (!(m.resolution > 0.0) || m.width <= 0 || m.height <= 0) {
    throw std::runtime_error("map metadata lacks resolution or size");
  }
  return m;
}

OccupancyGrid grid_from_pgm(const std::string& pgm, const MapMetadata& meta) {
  std::istringstream is(pgm);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  is.get();
  if (magic != "P5" || w != meta.width || h != meta.height || maxval != 255) {
    throw std::runtime_error("map image does not match its metadata");
  }
  const auto offset = static_cast<std::size_t>(is.tellg());
  if (pgm.size() < offset + static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
    throw std::runtime_error("map image is truncated");
  }
  OccupancyGrid grid(meta.resolution, {meta.origin_x, meta.origin_y}, w, h);
  for (int row = 0; row < h; ++row) {
    for (int x = 0; x < w; ++x) {
      const auto v = static_cast<unsigned char>(pgm[offset + static_cast<std::size_t>(row) * w + x]);
      const Cell c{x, h - 1 - row};
      if (v == static_cast<unsigned char>(meta.unknown_value)) {
        grid.set_logodds(c, 0.0, false);
        continue;
      }
      const double p = 1.0 - v / 255.0;
      double l = p >= 1.0 ? meta.model.l_max : p <= 0.0 ? meta.model.l_min : std::log(p / (1.0 - p));
      grid.set_logodds(c, std::clamp(l, meta.model.l_min, meta.model.l_max), true);
    }
  }
  return grid;
}

}  // namespace uwbslam
