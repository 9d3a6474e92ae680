#include "uwbslam/submap.hpp"

#include <fmt/format.h>

#include <cmath>
#include <ostream>

#include "uwbslam/kdtree.hpp"

namespace uwbslam {
namespace {

Submap finish(std::span<const Pose2> poses, std::span<const Scan> scans, std::span<const int> vertex_indices,
              std::size_t begin, std::size_t end, double travel, const FilterSettings& filters) {
  Submap s;
  s.anchor_index = vertex_indices.empty() ? static_cast<int>(begin) : vertex_indices[begin];
  s.anchor_pose = poses[begin];
  s.travel_length = travel;
  PointCloud2 merged;
  for (std::size_t k = begin; k < end; ++k) {
    s.member_indices.push_back(vertex_indices.empty() ? static_cast<int>(k) : vertex_indices[k]);
    const PointCloud2 part = project(scans[k], poses[k]);
    merged.points.insert(merged.points.end(), part.points.begin(), part.points.end());
  }
  merged.frame = Frame::kWorld;
  s.cloud = filter_chain(merged, filters);
  return s;
}

LoopCandidate match_with_index(const std::vector<Submap>& submaps, int a, int b, const KdTree2& index_a,
                               const LoopSettings& settings) {
  const Submap& sa = submaps[static_cast<std::size_t>(a)];
  const Submap& sb = submaps[static_cast<std::size_t>(b)];
  LoopCandidate c;
  c.submap_a = a;
  c.submap_b = b;
  c.prior = between(sa.anchor_pose, sb.anchor_pose);
  if (sb.cloud.empty() || index_a.empty()) {
    return c;
  }
  try {
    // both clouds live in the world frame, so identity is the prior relative pose
    IcpResult r = icp_align(sb.cloud, index_a, Transform2::identity(), settings.icp);
    const Pose2 corrected_b = compose(r.transform.to_pose(), sb.anchor_pose);
    c.measurement = between(sa.anchor_pose, corrected_b);
    c.accepted = accept_loop(r, settings.sigma, settings.icp);
    c.result = std::move(r);
  } catch (const IcpError&) {
    c.accepted = false;
  }
  return c;
}

}  // namespace

std::vector<Submap> build_submaps(std::span<const Pose2> poses, std::span<const Scan> scans,
                                  std::span<const int> vertex_indices, double epsilon, const FilterSettings& filters) {
  if (poses.size() != scans.size() || (!vertex_indices.empty() && vertex_indices.size() != poses.size())) {
    throw std::invalid_argument("build_submaps needs one pose and one vertex index per scan");
  }
  if (!(epsilon >= 0.0)) {
    throw std::invalid_argument("epsilon must be non-negative");
  }
  std::vector<Submap> out;
  if (poses.empty()) {
    return out;
  }
  std::size_t begin = 0;
  double travel = 0.0;
  for (std::size_t k = 1; k < poses.size(); ++k) {
    const double step = (poses[k].translation() - poses[k - 1].translation()).norm();
    if (travel + step >= epsilon - 1e-9) {
      out.push_back(finish(poses, scans, vertex_indices, begin, k, travel, filters));
      begin = k;
      travel = 0.0;
    } else {
      travel += step;
    }
  }
  out.push_back(finish(poses, scans, vertex_indices, begin, poses.size(), travel, filters));
  return out;
}

bool accept_loop(const IcpResult& result, double sigma, const IcpSettings& icp) {
  return result.converged && result.correspondence_count >= icp.min_correspondences && result.fitness < sigma;
}

LoopCandidate match_submaps(const std::vector<Submap>& submaps, int a, int b, const LoopSettings& settings) {
  const KdTree2 index(submaps.at(static_cast<std::size_t>(a)).cloud.points);
  (void)submaps.at(static_cast<std::size_t>(b));
  return match_with_index(submaps, a, b, index, settings);
}

std::vector<LoopCandidate> detect_loop_candidates(const std::vector<Submap>& submaps, const LoopSettings& settings) {
  settings.icp.validate();
  std::vector<LoopCandidate> out;
  const int n = static_cast<int>(submaps.size());
  for (int a = 0; a < n; ++a) {
    std::optional<KdTree2> index;
    for (int b = a + settings.min_index_gap; b < n; ++b) {
      const double dist = (submaps[a].anchor_pose.translation() - submaps[b].anchor_pose.translation()).norm();
      if (dist > settings.search_radius) {
        continue;
      }
      if (!index) {
        index.emplace(submaps[a].cloud.points);
      }
      out.push_back(match_with_index(submaps, a, b, *index, settings));
    }
  }
  return out;
}

std::vector<LoopEdge> loop_edges(const std::vector<Submap>& submaps, std::span<const LoopCandidate> candidates,
                                 const LoopNoise& noise) {
  std::vector<LoopEdge> out;
  for (const auto& c : candidates) {
    if (!c.accepted || !c.result) {
      continue;
    }
    LoopEdge e;
    e.i = submaps[static_cast<std::size_t>(c.submap_a)].anchor_index;
    e.j = submaps[static_cast<std::size_t>(c.submap_b)].anchor_index;
    e.measurement = c.measurement;
    e.fitness = c.result->fitness;
    e.information = noise.information(e.fitness);
    out.push_back(e);
  }
  return out;
}

std::vector<LoopEdge> detect_loops(const std::vector<Submap>& submaps, const LoopSettings& settings) {
  const auto candidates = detect_loop_candidates(submaps, settings);
  return loop_edges(submaps, candidates, settings.noise);
}

void write_loops_csv(std::ostream& os, const std::vector<Submap>& submaps, std::span<const LoopCandidate> candidates) {
  os << "anchor_i,anchor_j,fitness,accepted\n";
  for (const auto& c : candidates) {
    const int i = submaps[static_cast<std::size_t>(c.submap_a)].anchor_index;
    const int j = submaps[static_cast<std::size_t>(c.submap_b)].anchor_index;
    const std::string fitness = c.result ? fmt::format("{:.9g}", c.result->fitness) : std::string();
    os << fmt::format("{},{},{},{}\n", i, j, fitness, c.accepted ? 1 : 0);
  }
}

}  // namespace uwbslam
