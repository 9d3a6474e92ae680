#include "uwbslam/icp.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>
#include <cmath>

namespace uwbslam {
namespace {

std::vector<PointPair> match(const PointCloud2& source, const KdTree2& target, const Transform2& t,
                             double max_distance) {
  std::vector<PointPair> pairs;
  pairs.reserve(source.size());
  const Mat2 r = t.rotation_matrix();
  for (const auto& s : source.points) {
    const Neighbor n = target.nearest(r * s + t.translation);
    if (n.distance <= max_distance) {
      pairs.emplace_back(s, target.point(n.index));
    }
  }
  return pairs;
}

}  // namespace

void IcpSettings::validate() const {
  if (max_iterations <= 0 || !(outlier_distance > 0.0) || !(epsilon_translation > 0.0) ||
      !(epsilon_rotation > 0.0) || min_correspondences == 0) {
    throw std::invalid_argument("IcpSettings: all values must be positive");
  }
}

Transform2 best_rigid_transform(std::span<const PointPair> pairs) {
  if (pairs.size() < 2) {
    throw DegenerateGeometryError("rigid alignment needs at least two pairs");
  }
  const double n = static_cast<double>(pairs.size());
  Vec2 src_mean = Vec2::Zero();
  Vec2 dst_mean = Vec2::Zero();
  for (const auto& [s, t] : pairs) {
    src_mean += s;
    dst_mean += t;
  }
  src_mean /= n;
  dst_mean /= n;

  Mat2 cov = Mat2::Zero();
  double dot = 0.0;
  double cross = 0.0;
  for (const auto& [s, t] : pairs) {
    const Vec2 a = s - src_mean;
    const Vec2 b = t - dst_mean;
    cov += a * a.transpose();
    dot += a.dot(b);
    cross += a.x() * b.y() - a.y() * b.x();
  }
  cov /= n;
  const double min_eigen = Eigen::SelfAdjointEigenSolver<Mat2>(cov, Eigen::EigenvaluesOnly).eigenvalues()[0];
  if (std::sqrt(std::max(min_eigen, 0.0)) < 1e-9) {
    throw DegenerateGeometryError("source points are collinear; rigid transform is underdetermined");
  }
  const double angle = std::atan2(cross, dot);
  Transform2 out(angle, Vec2::Zero());
  out.translation = dst_mean - out.rotation_matrix() * src_mean;
  return out;
}

double alignment_objective(std::span<const PointPair> pairs, const Transform2& t) {
  if (pairs.empty()) {
    return 0.0;
  }
  const Mat2 r = t.rotation_matrix();
  double sum = 0.0;
  for (const auto& [s, d] : pairs) {
    sum += (d - r * s - t.translation).squaredNorm();
  }
  return sum / static_cast<double>(pairs.size());
}

IcpResult icp_align(const PointCloud2& source, const PointCloud2& target, const Transform2& initial_guess,
                    const IcpSettings& settings) {
  settings.validate();
  if (target.size() < settings.min_correspondences) {
    throw TooFewCorrespondencesError(
        fmt::format("target has {} points, need {}", target.size(), settings.min_correspondences));
  }
  const KdTree2 index(target.points);
  return icp_align(source, index, initial_guess, settings);
}

IcpResult icp_align(const PointCloud2& source, const KdTree2& target_index, const Transform2& initial_guess,
                    const IcpSettings& settings) {
  settings.validate();
  if (source.size() < settings.min_correspondences || target_index.size() < settings.min_correspondences) {
    throw TooFewCorrespondencesError(fmt::format("clouds have {} / {} points, need {}", source.size(),
                                                 target_index.size(), settings.min_correspondences));
  }
  IcpResult result;
  Transform2 current = initial_guess;
  for (int it = 1; it <= settings.max_iterations; ++it) {
    const auto pairs = match(source, target_index, current, settings.outlier_distance);
    if (pairs.size() < settings.min_correspondences) {
      throw TooFewCorrespondencesError(
          fmt::format("iteration {}: {} inliers, need {}", it, pairs.size(), settings.min_correspondences));
    }
    const Transform2 next = best_rigid_transform(pairs);
    if (settings.record_trace) {
      result.trace.push_back(
          {pairs.size(), alignment_objective(pairs, current), alignment_objective(pairs, next)});
    }
    const double dt = (next.translation - current.translation).norm();
    const double dr = std::abs(normalize_angle(next.rotation - current.rotation));
    current = next;
    result.iterations_used = it;
    if (dt < settings.epsilon_translation && dr < settings.epsilon_rotation) {
      result.converged = true;
      break;
    }
  }
  const auto inliers = match(source, target_index, current, settings.outlier_distance);
  if (inliers.size() < settings.min_correspondences) {
    throw TooFewCorrespondencesError(
        fmt::format("final match: {} inliers, need {}", inliers.size(), settings.min_correspondences));
  }
  result.transform = current;
  result.correspondence_count = inliers.size();
  result.fitness = alignment_objective(inliers, current);
  return result;
}

}  // namespace uwbslam
