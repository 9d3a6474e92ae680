#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "uwbslam/graph.hpp"
#include "uwbslam/icp.hpp"
#include "uwbslam/pointcloud.hpp"

namespace uwbslam {

/// Filtered union of consecutive scans in the world frame.
struct Submap {
  int anchor_index = 0;             // robot vertex of the first member
  Pose2 anchor_pose;                // its estimate when the submap was built
  std::vector<int> member_indices;  // robot vertices, in time order
  PointCloud2 cloud;
  double travel_length = 0.0;  // translational travel from first to last member
};

struct LoopCandidate {
  int submap_a = 0;
  int submap_b = 0;
  Pose2 prior;  // anchor b seen from anchor a under the current estimate
  std::optional<IcpResult> result;
  bool accepted = false;
  Pose2 measurement;  // corrected anchor-to-anchor relative pose (valid when result is set)
};

struct LoopSettings {
  double sigma = 0.1;  // m^2, fitness must be strictly below
  IcpSettings icp;
  double search_radius = 5.0;  // m between anchors
  int min_index_gap = 2;       // submaps
  LoopNoise noise;
};

/// Splits the members into contiguous runs whose translational travel stays below epsilon,
/// so epsilon = 0 gives one scan per submap. poses[k] is the pose of scans[k] and
/// vertex_indices[k] its robot vertex (empty means 0..n-1).
std::vector<Submap> build_submaps(std::span<const Pose2> poses, std::span<const Scan> scans,
                                  std::span<const int> vertex_indices, double epsilon,
                                  const FilterSettings& filters = {});

/// The acceptance gate: converged, enough inliers and fitness strictly below sigma.
bool accept_loop(const IcpResult& result, double sigma, const IcpSettings& icp);

/// Registers b onto a. ICP failures leave the candidate rejected without a result.
LoopCandidate match_submaps(const std::vector<Submap>& submaps, int a, int b, const LoopSettings& settings);

/// All gated pairs (anchor distance within the search radius, index gap large enough),
/// in (a, b) order.
std::vector<LoopCandidate> detect_loop_candidates(const std::vector<Submap>& submaps, const LoopSettings& settings);

/// One edge per accepted candidate between the anchor vertices.
std::vector<LoopEdge> loop_edges(const std::vector<Submap>& submaps, std::span<const LoopCandidate> candidates,
                                 const LoopNoise& noise);

/// detect_loop_candidates followed by loop_edges.
std::vector<LoopEdge> detect_loops(const std::vector<Submap>& submaps, const LoopSettings& settings);

/// CSV "anchor_i,anchor_j,fitness,accepted" (fitness empty when ICP failed).
void write_loops_csv(std::ostream& os, const std::vector<Submap>& submaps, std::span<const LoopCandidate> candidates);

}  // namespace uwbslam
