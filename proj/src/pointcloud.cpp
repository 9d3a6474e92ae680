#include "uwbslam/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace uwbslam {

bool Scan::is_valid(std::size_t k) const {
  const double r = ranges[k];
  return std::isfinite(r) && r > 0.0 && r <= range_max;
}

double Scan::span() const {
  return ranges.empty() ? 0.0 : static_cast<double>(ranges.size() - 1) * angle_increment;
}

PointCloud2 project(const Scan& scan, const Pose2& pose) {
  PointCloud2 cloud;
  cloud.frame = Frame::kWorld;
  cloud.points.reserve(scan.ranges.size());
  for (std::size_t k = 0; k < scan.ranges.size(); ++k) {
    if (!scan.is_valid(k)) {
      continue;
    }
    const double r = scan.ranges[k];
    const double a = scan.beam_angle(k);
    cloud.points.push_back(pose.transform_point({r * std::cos(a), r * std::sin(a)}));
  }
  return cloud;
}

PointCloud2 transform_cloud(const PointCloud2& cloud, const Transform2& t, Frame frame) {
  PointCloud2 out;
  out.frame = frame;
  out.points.reserve(cloud.size());
  const Mat2 r = t.rotation_matrix();
  for (const auto& p : cloud.points) {
    out.points.push_back(r * p + t.translation);
  }
  return out;
}

PointCloud2 voxel_filter(const PointCloud2& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) {
    throw std::invalid_argument("voxel_filter: voxel size must be positive");
  }
  struct Keyed {
    std::int64_t kx;
    std::int64_t ky;
    std::size_t idx;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(cloud.size());
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    const Vec2& p = cloud.points[k];
    keyed.push_back({static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                     static_cast<std::int64_t>(std::floor(p.y() / voxel_size)), k});
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return a.kx != b.kx ? a.kx < b.kx : a.ky < b.ky;
  });
  PointCloud2 out;
  out.frame = cloud.frame;
  std::size_t k = 0;
  while (k < keyed.size()) {
    std::size_t end = k;
    Vec2 sum = Vec2::Zero();
    while (end < keyed.size() && keyed[end].kx == keyed[k].kx && keyed[end].ky == keyed[k].ky) {
      sum += cloud.points[keyed[end].idx];
      ++end;
    }
    out.points.push_back(sum / static_cast<double>(end - k));
    k = end;
  }
  return out;
}

StatisticalFilterResult statistical_filter(const PointCloud2& cloud, std::size_t k, double stddev_mult) {
  StatisticalFilterResult result;
  if (cloud.size() <= k || k == 0) {
    result.cloud = cloud;
    result.too_small = true;
    return result;
  }
  const KdTree2 tree(cloud.points);
  std::vector<double> mean_dist(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto neighbors = tree.knn(cloud.points[i], k + 1);
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& n : neighbors) {
      if (n.index == i || used == k) {
        continue;
      }
      sum += n.distance;
      ++used;
    }
    mean_dist[i] = sum / static_cast<double>(used);
  }
  const double n = static_cast<double>(cloud.size());
  const double mean = std::accumulate(mean_dist.begin(), mean_dist.end(), 0.0) / n;
  double sq = 0.0;
  for (double d : mean_dist) {
    sq += (d - mean) * (d - mean);
  }
  const double stddev = std::sqrt(sq / (n - 1.0));
  const double threshold = mean + stddev_mult * stddev;
  result.cloud.frame = cloud.frame;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (mean_dist[i] <= threshold) {
      result.cloud.points.push_back(cloud.points[i]);
    }
  }
  return result;
}

PointCloud2 radius_filter(const PointCloud2& cloud, double radius, std::size_t min_neighbors) {
  if (!(radius > 0.0)) {
    throw std::invalid_argument("radius_filter: radius must be positive");
  }
  PointCloud2 out;
  out.frame = cloud.frame;
  if (cloud.empty()) {
    return out;
  }
  const KdTree2 tree(cloud.points);
  for (const auto& p : cloud.points) {
    // count includes the point itself
    if (tree.count_within(p, radius) >= min_neighbors + 1) {
      out.points.push_back(p);
    }
  }
  return out;
}

PointCloud2 filter_chain(const PointCloud2& cloud, const FilterSettings& settings) {
  PointCloud2 out = voxel_filter(cloud, settings.voxel_size);
  out = statistical_filter(out, settings.statistical_k, settings.statistical_stddev_mult).cloud;
  return radius_filter(out, settings.radius, settings.radius_min_neighbors);
}

NearestResult nearest_neighbor(const KdTree2& index, const Vec2& query) {
  const Neighbor n = index.nearest(query);
  return {index.point(n.index), n.distance, n.index};
}

void write_cloud(std::ostream& os, const PointCloud2& cloud) {
  for (const auto& p : cloud.points) {
    os << fmt::format("{:.17g} {:.17g}\n", p.x(), p.y());
  }
}

PointCloud2 read_cloud(std::istream& is, Frame frame) {
  PointCloud2 cloud;
  cloud.frame = frame;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream ls(line);
    double x, y;
    if (!(ls >> x >> y) || !std::isfinite(x) || !std::isfinite(y)) {
      throw std::runtime_error(fmt::format("cloud line {}: expected two finite numbers", line_no));
    }
    cloud.points.emplace_back(x, y);
  }
  return cloud;
}

}  // namespace uwbslam
