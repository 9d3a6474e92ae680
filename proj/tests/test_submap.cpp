#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "uwbslam/simulator.hpp"
#include "uwbslam/submap.hpp"

using namespace uwbslam;

namespace {

Scan scan_at(const World& w, const Pose2& pose) {
  const LidarSpec spec;
  Scan s;
  s.angle_min = spec.angle_min;
  s.angle_increment = spec.angle_increment;
  s.range_max = spec.range_max;
  for (int k = 0; k < spec.beams; ++k) {
    const auto r = raycast(w, pose.translation(), pose.theta() + s.beam_angle(static_cast<std::size_t>(k)), spec.range_max);
    s.ranges.push_back(r ? *r : std::numeric_limits<double>::infinity());
  }
  return s;
}

// A short fan of returns; partition tests only look at membership.
Scan stub_scan() {
  Scan s;
  s.angle_min = -0.5;
  s.angle_increment = 0.05;
  s.range_max = 5.0;
  s.ranges.assign(21, 1.0);
  return s;
}

std::vector<Pose2> straight_line(int n, double step) {
  std::vector<Pose2> poses;
  for (int k = 0; k < n; ++k) poses.emplace_back(k * step, 0.0, 0.0);
  return poses;
}

// Two passes over the same stretch of the standard room, one poses-per-0.1 m.
struct TwoPasses {
  World world;
  std::vector<Pose2> first, second;
  std::vector<Scan> first_scans, second_scans;
};

TwoPasses two_passes() {
  TwoPasses t;
  t.world = standard_scenario(10).world;
  for (int k = 0; k < 30; ++k) {
    t.first.emplace_back(10.0, 4.0 + 0.1 * k, std::numbers::pi / 2);
    t.second.emplace_back(10.0, 4.05 + 0.1 * k, std::numbers::pi / 2);
  }
  for (const auto& p : t.first) t.first_scans.push_back(scan_at(t.world, p));
  for (const auto& p : t.second) t.second_scans.push_back(scan_at(t.world, p));
  return t;
}

void expect_pose_near(const Pose2& a, const Pose2& b, double tol) {
  EXPECT_NEAR(a.x(), b.x(), tol);
  EXPECT_NEAR(a.y(), b.y(), tol);
  EXPECT_NEAR(normalize_angle(a.theta() - b.theta()), 0.0, tol);
}

}  // namespace

TEST(BuildSubmaps, StraightLineSplitsEveryNineMetres) {
  const auto poses = straight_line(270, 0.1);
  const std::vector<Scan> scans(poses.size(), stub_scan());
  const auto submaps = build_submaps(poses, scans, {}, 9.0);
  ASSERT_EQ(submaps.size(), 3u);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(submaps[s].member_indices.size(), 90u);
    EXPECT_EQ(submaps[s].anchor_index, static_cast<int>(90 * s));
    EXPECT_NEAR(submaps[s].travel_length, 8.9, 1e-9);
  }
}

TEST(BuildSubmaps, EpsilonBeyondTravelGivesOneSubmap) {
  const auto poses = straight_line(50, 0.1);
  const std::vector<Scan> scans(poses.size(), stub_scan());
  const auto submaps = build_submaps(poses, scans, {}, 100.0);
  ASSERT_EQ(submaps.size(), 1u);
  EXPECT_EQ(submaps[0].member_indices.size(), 50u);
}

TEST(BuildSubmaps, EpsilonZeroGivesSingleScans) {
  const auto poses = straight_line(40, 0.1);
  const std::vector<Scan> scans(poses.size(), stub_scan());
  const std::vector<int> vertices = [] {
    std::vector<int> v;
    for (int k = 0; k < 40; ++k) v.push_back(3 * k + 1);
    return v;
  }();
  const auto submaps = build_submaps(poses, scans, vertices, 0.0);
  ASSERT_EQ(submaps.size(), 40u);
  for (std::size_t k = 0; k < 40; ++k) {
    ASSERT_EQ(submaps[k].member_indices.size(), 1u);
    EXPECT_EQ(submaps[k].anchor_index, vertices[k]);
    EXPECT_EQ(submaps[k].travel_length, 0.0);
  }
}

TEST(BuildSubmaps, PartitionProperties) {
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> step(0.0, 0.3), turn(-0.3, 0.3), eps(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Pose2> poses{Pose2(0, 0, 0)};
    for (int k = 1; k < 200; ++k) poses.push_back(compose(poses.back(), Pose2(step(rng), 0.0, turn(rng))));
    const std::vector<Scan> scans(poses.size(), stub_scan());
    const double epsilon = eps(rng);
    const auto submaps = build_submaps(poses, scans, {}, epsilon);
    int expected = 0;
    for (std::size_t s = 0; s < submaps.size(); ++s) {
      const auto& m = submaps[s].member_indices;
      ASSERT_FALSE(m.empty());
      EXPECT_EQ(submaps[s].anchor_index, m.front());
      EXPECT_EQ(submaps[s].anchor_pose, poses[static_cast<std::size_t>(m.front())]);
      double travel = 0.0;
      for (std::size_t k = 0; k < m.size(); ++k) {
        EXPECT_EQ(m[k], expected++);  // contiguous, in order, nothing skipped
        if (k > 0) travel += (poses[m[k]].translation() - poses[m[k - 1]].translation()).norm();
      }
      EXPECT_NEAR(submaps[s].travel_length, travel, 1e-9);
      if (m.size() > 1) {
        EXPECT_LT(travel, epsilon);
      }
      if (s + 1 < submaps.size()) {
        // a submap closes only when the next scan would reach epsilon
        const double next = (poses[m.back() + 1].translation() - poses[m.back()].translation()).norm();
        EXPECT_GE(travel + next, epsilon - 1e-9);
      }
    }
    EXPECT_EQ(expected, 200);
  }
}

TEST(BuildSubmaps, RejectsMismatchedInputs) {
  const auto poses = straight_line(5, 0.1);
  const std::vector<Scan> scans(4, stub_scan());
  EXPECT_THROW(build_submaps(poses, scans, {}, 1.0), std::invalid_argument);
  const std::vector<Scan> ok(5, stub_scan());
  EXPECT_THROW(build_submaps(poses, ok, {}, -1.0), std::invalid_argument);
  EXPECT_TRUE(build_submaps({}, {}, {}, 1.0).empty());
}

TEST(BuildSubmaps, CloudIsFilteredWorldUnion) {
  const TwoPasses t = two_passes();
  const auto submaps = build_submaps(t.first, t.first_scans, {}, 100.0);
  ASSERT_EQ(submaps.size(), 1u);
  const PointCloud2& c = submaps[0].cloud;
  EXPECT_EQ(c.frame, Frame::kWorld);
  ASSERT_GT(c.size(), 50u);
  // every surviving point lies on the room or column boundary up to the voxel size
  for (const auto& p : c.points) {
    double d = std::min({p.x(), 20.0 - p.x(), p.y(), 20.0 - p.y()});
    for (const auto& col : t.world.columns) d = std::min(d, std::abs((p - col.center).norm() - col.radius));
    EXPECT_LT(d, 0.05);
  }
}

TEST(MatchSubmaps, IdenticalSubmapsGiveIdentityLoop) {
  const TwoPasses t = two_passes();
  const auto one = build_submaps(t.first, t.first_scans, {}, 100.0);
  const std::vector<Submap> submaps = {one[0], one[0], one[0]};
  const LoopCandidate c = match_submaps(submaps, 0, 2, LoopSettings{});
  ASSERT_TRUE(c.result.has_value());
  EXPECT_TRUE(c.accepted);
  EXPECT_EQ(c.result->fitness, 0.0);
  expect_pose_near(c.measurement, Pose2(0, 0, 0), 1e-12);
}

TEST(MatchSubmaps, CorrectsDriftedAnchor) {
  const TwoPasses t = two_passes();
  // the second pass is believed to sit 4 cm and 0.01 rad away from where it was taken
  const Pose2 drift(0.03, -0.04, 0.01);
  std::vector<Pose2> believed;
  for (const auto& p : t.second) believed.push_back(compose(drift, p));
  const auto a = build_submaps(t.first, t.first_scans, {}, 100.0);
  const auto b = build_submaps(believed, t.second_scans, {}, 100.0);
  const std::vector<Submap> submaps = {a[0], a[0], b[0]};
  LoopSettings settings;
  settings.icp.epsilon_translation = 1e-8;
  settings.icp.epsilon_rotation = 1e-8;
  const LoopCandidate c = match_submaps(submaps, 0, 2, settings);
  ASSERT_TRUE(c.result.has_value());
  EXPECT_TRUE(c.accepted);
  EXPECT_NEAR(c.prior.y(), between(t.first[0], compose(drift, t.second[0])).y(), 1e-12);
  // the measurement is the true relative pose between the anchors, not the believed one
  expect_pose_near(c.measurement, between(t.first[0], t.second[0]), 0.01);
}

TEST(AcceptLoop, GateIsStrict) {
  IcpResult r;
  r.converged = true;
  r.correspondence_count = 50;
  r.fitness = 0.1;
  const IcpSettings icp;
  EXPECT_FALSE(accept_loop(r, 0.1, icp));
  EXPECT_TRUE(accept_loop(r, 0.1000001, icp));
  r.correspondence_count = 49;
  EXPECT_FALSE(accept_loop(r, 1.0, icp));
  r.correspondence_count = 50;
  r.converged = false;
  EXPECT_FALSE(accept_loop(r, 1.0, icp));
}

TEST(DetectLoops, GatingByRadiusAndIndexGap) {
  const TwoPasses t = two_passes();
  const auto base = build_submaps(t.first, t.first_scans, {}, 100.0);
  std::vector<Submap> submaps(5, base[0]);
  for (int k = 0; k < 5; ++k) submaps[k].anchor_index = 10 * k;
  submaps[4].anchor_pose = compose(Pose2(5.01, 0.0, 0.0), submaps[4].anchor_pose);
  const auto candidates = detect_loop_candidates(submaps, LoopSettings{});
  std::set<std::pair<int, int>> pairs;
  for (const auto& c : candidates) pairs.emplace(c.submap_a, c.submap_b);
  // (0,4) (1,4) (2,4) fail the radius; adjacent pairs fail the gap
  const std::set<std::pair<int, int>> expected = {{0, 2}, {0, 3}, {1, 3}};
  EXPECT_EQ(pairs, expected);
  for (const auto& c : candidates) EXPECT_GE(c.submap_b - c.submap_a, 2);
}

TEST(DetectLoops, AcceptedSetGrowsWithSigma) {
  const TwoPasses t = two_passes();
  std::vector<Pose2> poses = t.first;
  std::vector<Scan> scans = t.first_scans;
  std::mt19937_64 rng(82);
  std::normal_distribution<double> wobble(0.0, 0.03);
  for (std::size_t k = 0; k < t.second.size(); ++k) {
    poses.push_back(compose(Pose2(wobble(rng), wobble(rng), 0.2 * wobble(rng)), t.second[k]));
    scans.push_back(t.second_scans[k]);
  }
  const auto submaps = build_submaps(poses, scans, {}, 0.5);
  ASSERT_GE(submaps.size(), 8u);
  std::set<std::pair<int, int>> previous;
  for (const double sigma : {1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0}) {
    LoopSettings s;
    s.sigma = sigma;
    std::set<std::pair<int, int>> accepted;
    for (const auto& c : detect_loop_candidates(submaps, s)) {
      if (c.accepted) accepted.emplace(c.submap_a, c.submap_b);
    }
    for (const auto& p : previous) EXPECT_TRUE(accepted.count(p)) << sigma;
    EXPECT_GE(accepted.size(), previous.size());
    previous = accepted;
  }
  EXPECT_FALSE(previous.empty());
}

TEST(LoopEdges, WeightsByFitnessAndWritesCsv) {
  const TwoPasses t = two_passes();
  const auto base = build_submaps(t.first, t.first_scans, {}, 100.0);
  std::vector<Submap> submaps(3, base[0]);
  submaps[2].anchor_index = 29;
  LoopCandidate ok;
  ok.submap_a = 0;
  ok.submap_b = 2;
  ok.accepted = true;
  ok.result = IcpResult{};
  ok.result->fitness = 0.004;
  ok.measurement = Pose2(0.1, 0.2, 0.3);
  LoopCandidate failed;
  failed.submap_a = 0;
  failed.submap_b = 2;
  const std::vector<LoopCandidate> candidates = {ok, failed};
  LoopNoise noise;
  noise.sigma_translation = 0.5;
  noise.sigma_rotation = 0.25;
  const auto edges = loop_edges(submaps, candidates, noise);
  ASSERT_EQ(edges.size(), 1u);
  EXPECT_EQ(edges[0].i, 0);
  EXPECT_EQ(edges[0].j, 29);
  EXPECT_EQ(edges[0].measurement, ok.measurement);
  EXPECT_NEAR(edges[0].information(0, 0), 4.0 / 0.004, 1e-9);
  EXPECT_NEAR(edges[0].information(2, 2), 16.0 / 0.004, 1e-9);
  EXPECT_EQ(noise.information(0.0)(0, 0), 4.0 / 1e-6);
  std::ostringstream os;
  write_loops_csv(os, submaps, candidates);
  EXPECT_EQ(os.str(), "anchor_i,anchor_j,fitness,accepted\n0,29,0.004,1\n0,29,,0\n");
}
