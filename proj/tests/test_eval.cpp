#include <gtest/gtest.h>

#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "uwbslam/eval.hpp"
#include "uwbslam/experiment.hpp"

using namespace uwbslam;

namespace {

std::map<int, Vec2> true_centers(const World& w) {
  std::map<int, Vec2> out;
  for (const auto& c : w.columns) out[c.label] = c.center;
  return out;
}

std::vector<Pose2> random_path(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 20.0), a(-3.0, 3.0);
  std::vector<Pose2> out;
  for (int k = 0; k < n; ++k) out.emplace_back(u(rng), u(rng), a(rng));
  return out;
}

std::vector<Pose2> moved(const std::vector<Pose2>& poses, const Transform2& t) {
  std::vector<Pose2> out;
  for (const auto& p : poses) out.push_back(compose(t.to_pose(), p));
  return out;
}

double unaligned_rmse(const std::vector<Pose2>& a, const std::vector<Pose2>& b) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sq += (a[k].translation() - b[k].translation()).squaredNorm();
  return std::sqrt(sq / static_cast<double>(a.size()));
}

std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

TEST(MappingError, ExactCentersGiveZero) {
  const World w = standard_scenario(10).world;
  const auto pairs = column_pairs(w.columns);
  const MappingErrorReport r = mapping_error(true_centers(w), pairs);
  ASSERT_EQ(r.per_pair.size(), 10u);
  EXPECT_NEAR(r.mean_error, 0.0, 1e-12);
}

TEST(MappingError, MatchesDirectComputation) {
  const World w = standard_scenario(10).world;
  const auto pairs = column_pairs(w.columns);
  auto centers = true_centers(w);
  // column 1 moves 0.1 m away from column 2 along their axis: L12 grows by 0.1
  centers[1] += Vec2(-0.1, 0.0);
  const MappingErrorReport r = mapping_error(centers, pairs);
  EXPECT_NEAR(r.per_pair[0].error, 0.1, 1e-12);
  EXPECT_NEAR(r.per_pair[0].estimated, 6.1, 1e-12);
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n(0.0, 0.05);
  for (auto& [label, c] : centers) c += Vec2(n(rng), n(rng));
  const MappingErrorReport s = mapping_error(centers, pairs);
  double sum = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double d = (centers.at(pairs[k].a) - centers.at(pairs[k].b)).norm();
    EXPECT_NEAR(s.per_pair[k].error, std::abs(d - pairs[k].distance), 1e-12);
    sum += std::abs(d - pairs[k].distance);
  }
  EXPECT_NEAR(s.mean_error, sum / 10.0, 1e-12);
}

TEST(MappingError, InvariantUnderRigidMotionOfTheMap) {
  const World w = standard_scenario(10).world;
  const auto pairs = column_pairs(w.columns);
  std::mt19937_64 rng(102);
  std::normal_distribution<double> n(0.0, 0.05);
  auto centers = true_centers(w);
  for (auto& [label, c] : centers) c += Vec2(n(rng), n(rng));
  const Transform2 g(1.1, Vec2(-3.0, 7.5));
  auto shifted = centers;
  for (auto& [label, c] : shifted) c = g.apply(c);
  EXPECT_NEAR(mapping_error(centers, pairs).mean_error, mapping_error(shifted, pairs).mean_error, 1e-12);
}

TEST(MappingError, Errors) {
  const World w = standard_scenario(10).world;
  auto centers = true_centers(w);
  centers.erase(5);
  EXPECT_THROW(mapping_error(centers, column_pairs(w.columns)), MissingColumnError);
  EXPECT_THROW(mapping_error(true_centers(w), {}), EvalError);
}

TEST(ExtractCenters, CentroidOfOccupiedDisc) {
  OccupancyGrid g(0.05, Vec2(0, 0), 100, 100);
  const Vec2 center = g.cell_center({40, 60});
  for (int y = 0; y < 100; ++y) {
    for (int x = 0; x < 100; ++x) {
      if ((g.cell_center({x, y}) - center).norm() <= 0.32) g.set_logodds({x, y}, 3.0, true);
    }
  }
  const auto out = extract_column_centers(g, {{7, center + Vec2(0.4, -0.3)}});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR((out.at(7) - center).norm(), 0.0, 1e-12);
}

TEST(ExtractCenters, RingOfWallHitsFindsTheColumn) {
  OccupancyGrid g(0.05, Vec2(0, 0), 100, 100);
  const Vec2 center(2.37, 2.61);
  for (int k = 0; k < 720; ++k) {
    const double a = k * std::numbers::pi / 360.0;
    g.set_logodds(g.cell_of(center + 0.3 * Vec2(std::cos(a), std::sin(a))), 3.0, true);
  }
  Vec2 sum = Vec2::Zero();
  int count = 0;
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      if (g.touched({x, y})) {
        sum += g.cell_center({x, y});
        ++count;
      }
    }
  }
  const auto out = extract_column_centers(g, {{1, center + Vec2(0.3, 0.3)}});
  EXPECT_NEAR((out.at(1) - sum / count).norm(), 0.0, 1e-12);
  // quantizing the ring to cells moves its centroid by less than a cell
  EXPECT_LT((out.at(1) - center).norm(), 0.05);
}

TEST(ExtractCenters, ThresholdIsStrictAndUntouchedIgnored) {
  OccupancyGrid g(0.1, Vec2(0, 0), 50, 50);
  const Cell a{10, 10}, b{12, 10}, c{14, 10};
  g.set_logodds(a, std::log(0.64 / 0.36), true);  // below the 0.65 threshold
  g.set_logodds(b, 2.0, true);
  g.set_logodds(c, 2.0, false);                   // never observed
  const auto out = extract_column_centers(g, {{1, g.cell_center(a)}});
  EXPECT_NEAR((out.at(1) - g.cell_center(b)).norm(), 0.0, 1e-12);
  // cells beyond the search radius do not count
  EXPECT_THROW(extract_column_centers(g, {{1, g.cell_center({40, 40})}}), NoOccupiedCellsError);
  // a seed off the grid is not an error by itself
  g.set_logodds({0, 0}, 2.0, true);
  EXPECT_NO_THROW(extract_column_centers(g, {{2, Vec2(-0.3, -0.3)}}));
}

TEST(Ate, Examples) {
  const std::vector<Pose2> truth = {Pose2(0, 0, 0), Pose2(1, 0, 0), Pose2(1, 1, 0), Pose2(0, 1, 0)};
  EXPECT_EQ(trajectory_ate(truth, truth), 0.0);
  // a shifted and rotated copy aligns perfectly
  EXPECT_NEAR(trajectory_ate(moved(truth, Transform2(0.7, Vec2(3, -2))), truth), 0.0, 1e-12);
  // scaling cannot be removed by a rigid alignment: 10% larger square, centred, RMSE = 0.1 * 0.5 * sqrt(2)
  std::vector<Pose2> big;
  for (const auto& p : truth) big.emplace_back(0.5 + 1.1 * (p.x() - 0.5), 0.5 + 1.1 * (p.y() - 0.5), 0.0);
  EXPECT_NEAR(trajectory_ate(big, truth), 0.05 * std::sqrt(2.0), 1e-12);
  EXPECT_EQ(trajectory_ate(std::vector<Pose2>{}, std::vector<Pose2>{}), 0.0);
  EXPECT_THROW(trajectory_ate(truth, std::vector<Pose2>(3)), LengthMismatchError);
}

TEST(Ate, InvariantUnderRigidMotionAndBoundedByRawError) {
  std::mt19937_64 rng(103);
  std::normal_distribution<double> n(0.0, 0.2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto truth = random_path(rng, 50);
    std::vector<Pose2> est;
    for (const auto& p : truth) est.emplace_back(p.x() + n(rng), p.y() + n(rng), p.theta());
    const double ate = trajectory_ate(est, truth);
    const Transform2 g(n(rng) * 10.0, Vec2(n(rng) * 20.0, n(rng) * 20.0));
    EXPECT_NEAR(trajectory_ate(moved(est, g), truth), ate, 1e-9);
    EXPECT_LE(ate, unaligned_rmse(est, truth) + 1e-12);
  }
}

TEST(Ate, AlignmentIsTheLeastSquaresMinimum) {
  std::mt19937_64 rng(104);
  std::normal_distribution<double> n(0.0, 0.2), perturb(0.0, 0.02);
  const auto truth = random_path(rng, 40);
  std::vector<Pose2> est;
  for (const auto& p : truth) est.emplace_back(p.x() + n(rng), p.y() + n(rng), 0.0);
  const Transform2 best = align_trajectories(est, truth);
  const double ate = trajectory_ate(est, truth);
  for (int k = 0; k < 2000; ++k) {
    const Transform2 other(best.rotation + perturb(rng), best.translation + Vec2(perturb(rng), perturb(rng)));
    EXPECT_LE(ate, unaligned_rmse(moved(est, other), truth) + 1e-12);
  }
}

TEST(Ate, MonteCarloMatchesNoiseLevel) {
  // isotropic noise with 0.1 m RMS displacement; the fit absorbs 3 of 2n degrees of freedom
  std::mt19937_64 rng(105);
  std::normal_distribution<double> n(0.0, 0.1 / std::sqrt(2.0));
  double sum = 0.0;
  const int trials = 200, count = 300;
  for (int t = 0; t < trials; ++t) {
    const auto truth = random_path(rng, count);
    std::vector<Pose2> est;
    for (const auto& p : truth) est.emplace_back(p.x() + n(rng), p.y() + n(rng), p.theta());
    sum += trajectory_ate(moved(est, Transform2(0.3, Vec2(1, 2))), truth);
  }
  EXPECT_NEAR(sum / trials, 0.1 * std::sqrt((2.0 * count - 3.0) / (2.0 * count)), 0.003);
}

TEST(TruthAt, ExactStampsOnly) {
  GroundTruth gt;
  gt.trajectory = {{0.0, Pose2(0, 0, 0)}, {0.1, Pose2(1, 0, 0)}, {0.2, Pose2(2, 0, 0)}};
  const std::vector<double> stamps = {0.2, 0.1000000004};
  const auto out = truth_at(gt, stamps);
  EXPECT_EQ(out[0], Pose2(2, 0, 0));
  EXPECT_EQ(out[1], Pose2(1, 0, 0));
  EXPECT_THROW(truth_at(gt, std::vector<double>{0.15}), LengthMismatchError);
}

TEST(Csv, Layouts) {
  const World w = standard_scenario(10).world;
  auto centers = true_centers(w);
  centers[1] += Vec2(-0.25, 0.0);
  EvaluationRow row;
  row.label = "run";
  row.mapping = mapping_error(centers, column_pairs(w.columns));
  row.ate = 0.125;
  std::ostringstream a;
  write_evaluation_csv(a, std::vector<EvaluationRow>{row});
  EXPECT_EQ(a.str(),
            "label,mean_error,ate,L12,L34,L56,L78,L13,L35,L57,L24,L46,L68\n"
            "run," + fixed6(row.mapping.mean_error) +
                ",0.125000,0.250000,0.000000,0.000000,0.000000," +
                fixed6(row.mapping.per_pair[4].error) +
                ",0.000000,0.000000,0.000000,0.000000,0.000000\n");
  std::ostringstream b;
  write_mapping_csv(b, row.mapping);
  EXPECT_EQ(b.str().rfind("pair,estimated,truth,error\nL12,6.250000,6.000000,0.250000\n", 0), 0u);
  EXPECT_NE(b.str().find("\nmean,,,"), std::string::npos);
}

TEST(EvaluateOutputs, SeedsFollowTheEstimateFrame) {
  // a map built on the true trajectory, then the same map and trajectory moved rigidly;
  // the full circuit sees every column from both sides
  const SimulationOutput sim = simulate_standard(11, 480);
  std::vector<double> stamps;
  std::vector<Pose2> poses;
  for (std::size_t k = 0; k < sim.truth.trajectory.size(); k += 5) {
    stamps.push_back(sim.truth.trajectory[k].stamp);
    poses.push_back(sim.truth.trajectory[k].pose);
  }
  const PipelineConfig config;
  const OccupancyGrid grid = build_map(sim.log, stamps, poses, config);
  const EvaluationRow a = evaluate_outputs(grid, TrajectoryFile{stamps, poses}, sim.truth, "truth");
  // true poses still leave a few centimetres: partial views of each column and range noise
  EXPECT_LT(a.mapping.mean_error, 0.05);
  EXPECT_NEAR(a.ate, 0.0, 1e-9);

  const auto shifted = moved(poses, Transform2(2.0, Vec2(30.0, -4.0)));
  const OccupancyGrid moved_grid = build_map(sim.log, stamps, shifted, config);
  const EvaluationRow b = evaluate_outputs(moved_grid, TrajectoryFile{stamps, shifted}, sim.truth, "moved");
  EXPECT_NEAR(b.ate, 0.0, 1e-9);
  EXPECT_NEAR(b.mapping.mean_error, a.mapping.mean_error, 0.02);
}
