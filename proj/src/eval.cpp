#include "uwbslam/eval.hpp"

#include <fmt/format.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>

namespace uwbslam {

MappingErrorReport mapping_error(const std::map<int, Vec2>& estimated_centers, std::span<const ColumnPair> pairs) {
  if (pairs.empty()) {
    throw EvalError("no column pairs to evaluate");
  }
  MappingErrorReport r;
  double sum = 0.0;
  for (const auto& p : pairs) {
    const auto a = estimated_centers.find(p.a);
    const auto b = estimated_centers.find(p.b);
    if (a == estimated_centers.end() || b == estimated_centers.end()) {
      throw MissingColumnError(fmt::format("pair {} needs columns {} and {}", p.label, p.a, p.b));
    }
    PairError e;
    e.label = p.label;
    e.estimated = (a->second - b->second).norm();
    e.truth = p.distance;
    e.error = std::abs(e.estimated - e.truth);
    sum += e.error;
    r.per_pair.push_back(e);
  }
  r.mean_error = sum / static_cast<double>(r.per_pair.size());
  return r;
}

std::map<int, Vec2> extract_column_centers(const OccupancyGrid& grid, const std::map<int, Vec2>& seeds,
                                           const CenterExtraction& settings) {
  std::map<int, Vec2> out;
  for (const auto& [label, seed] : seeds) {
    const Cell lo = grid.cell_of(seed - Vec2::Constant(settings.search_radius));
    const Cell hi = grid.cell_of(seed + Vec2::Constant(settings.search_radius));
    Vec2 sum = Vec2::Zero();
    std::size_t count = 0;
    for (int y = std::max(lo.y, 0); y <= std::min(hi.y, grid.height() - 1); ++y) {
      for (int x = std::max(lo.x, 0); x <= std::min(hi.x, grid.width() - 1); ++x) {
        const Cell c{x, y};
        const Vec2 center = grid.cell_center(c);
        if ((center - seed).norm() > settings.search_radius) continue;
        if (grid.touched(c) && grid.probability(c) > settings.occupied_threshold) {
          sum += center;
          ++count;
        }
      }
    }
    if (count == 0) {
      throw NoOccupiedCellsError(
          fmt::format("no occupied cell within {:.2f} m of column {} seed ({:.2f}, {:.2f})", settings.search_radius,
                      label, seed.x(), seed.y()));
    }
    out[label] = sum / static_cast<double>(count);
  }
  return out;
}

Transform2 align_trajectories(std::span<const Pose2> estimated, std::span<const Pose2> truth) {
  if (estimated.size() != truth.size()) {
    throw LengthMismatchError(fmt::format("{} estimated poses vs {} ground-truth poses", estimated.size(), truth.size()));
  }
  if (estimated.empty()) {
    return Transform2::identity();
  }
  const double n = static_cast<double>(estimated.size());
  Vec2 ce = Vec2::Zero();
  Vec2 ct = Vec2::Zero();
  for (std::size_t k = 0; k < estimated.size(); ++k) {
    ce += estimated[k].translation();
    ct += truth[k].translation();
  }
  ce /= n;
  ct /= n;
  double dot = 0.0;
  double cross = 0.0;
  for (std::size_t k = 0; k < estimated.size(); ++k) {
    const Vec2 e = estimated[k].translation() - ce;
    const Vec2 t = truth[k].translation() - ct;
    dot += e.dot(t);
    cross += e.x() * t.y() - e.y() * t.x();
  }
  const double angle = std::atan2(cross, dot);
  const Mat2 r = Eigen::Rotation2Dd(angle).toRotationMatrix();
  return Transform2(angle, ct - r * ce);
}

double trajectory_ate(std::span<const Pose2> estimated, std::span<const Pose2> truth) {
  const Transform2 t = align_trajectories(estimated, truth);
  if (estimated.empty()) {
    return 0.0;
  }
  double sq = 0.0;
  for (std::size_t k = 0; k < estimated.size(); ++k) {
    sq += (t.apply(estimated[k].translation()) - truth[k].translation()).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(estimated.size()));
}

std::vector<Pose2> truth_at(const GroundTruth& truth, std::span<const double> stamps) {
  std::map<std::int64_t, const Pose2*> index;
  for (const auto& s : truth.trajectory) {
    index[std::llround(s.stamp * 1e6)] = &s.pose;
  }
  std::vector<Pose2> out;
  out.reserve(stamps.size());
  for (double t : stamps) {
    const auto it = index.find(std::llround(t * 1e6));
    if (it == index.end()) {
      throw LengthMismatchError(fmt::format("no ground-truth pose at stamp {:.6f}", t));
    }
    out.push_back(*it->second);
  }
  return out;
}

void write_evaluation_csv(std::ostream& os, std::span<const EvaluationRow> rows) {
  os << "label,mean_error,ate";
  if (!rows.empty()) {
    for (const auto& p : rows.front().mapping.per_pair) os << ',' << p.label;
  }
  os << '\n';
  for (const auto& row : rows) {
    os << fmt::format("{},{:.6f},{:.6f}", row.label, row.mapping.mean_error, row.ate);
    for (const auto& p : row.mapping.per_pair) os << fmt::format(",{:.6f}", p.error);
    os << '\n';
  }
}

void write_mapping_csv(std::ostream& os, const MappingErrorReport& report) {
  os << "pair,estimated,truth,error\n";
  for (const auto& p : report.per_pair) {
    os << fmt::format("{},{:.6f},{:.6f},{:.6f}\n", p.label, p.estimated, p.truth, p.error);
  }
  os << fmt::format("mean,,,{:.6f}\n", report.mean_error);
}

}  // namespace uwbslam
