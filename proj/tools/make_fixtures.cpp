// Regenerates tests/fixtures: one small sample per file format and a perfect-input evaluation case.
// Usage: make_fixtures <fixtures-dir>

#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "uwbslam/experiment.hpp"

namespace fs = std::filesystem;
using namespace uwbslam;

namespace {

void save(const fs::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

template <typename F>
std::string text(F&& fill) {
  std::ostringstream os;
  fill(os);
  return os.str();
}

SensorLog sample_log() {
  SensorLog log;
  log.odometry = {{0.0, Pose2(10.0, 2.0, 1.570796)}, {0.1, Pose2(10.0, 2.02, 1.570796)},
                  {0.2, Pose2(10.001, 2.04, 1.571)}};
  Scan s;
  s.stamp = 0.05;
  s.angle_min = -0.1;
  s.angle_increment = 0.05;
  s.range_max = 5.6;
  s.ranges = {2.1, 2.125, std::numeric_limits<double>::infinity(), 5.5, 0.75};
  log.scans = {s};
  log.uwb = {{0.02, 1, 9.05}, {0.06, 2, 9.1}, {0.1, 3, 19.3}, {0.14, 4, 19.25}};
  return quantize(log);
}

// Columns drawn as filled discs on a grid whose cell centres hit every true centre, and a
// trajectory equal to the ground truth: mapping error and ATE are both zero.
void perfect_case(const fs::path& dir) {
  fs::create_directories(dir);
  const Scenario s = standard_scenario(2.0, 4);
  const SimulationOutput sim = generate_log(s.world, s.trajectory, SensorRates{}, LidarSpec{}, NoiseModel::zero());
  OccupancyGrid grid(0.05, Vec2(-0.025, -0.025), 401, 401);
  for (const auto& c : sim.truth.columns) {
    const Cell mid = grid.cell_of(c.center);
    for (int dy = -8; dy <= 8; ++dy) {
      for (int dx = -8; dx <= 8; ++dx) {
        const Cell cell{mid.x + dx, mid.y + dy};
        if ((grid.cell_center(cell) - c.center).norm() <= c.radius + 0.02) grid.set_logodds(cell, 3.0, true);
      }
    }
  }
  std::vector<double> stamps;
  std::vector<Pose2> poses;
  for (const auto& p : sim.truth.trajectory) {
    stamps.push_back(p.stamp);
    poses.push_back(p.pose);
  }
  save(dir / "ground_truth.json", text([&](std::ostream& os) { write_ground_truth(os, sim.truth); }));
  save(dir / "trajectory.txt", text([&](std::ostream& os) { write_trajectory(os, stamps, poses); }));
  save(dir / "map.pgm", render_pgm(grid));
  save(dir / "map.meta", render_metadata(metadata_for(grid, SensorModel{})));
  const MapMetadata meta = parse_metadata(render_metadata(metadata_for(grid, SensorModel{})));
  const EvaluationRow row = evaluate_outputs(grid_from_pgm(render_pgm(grid), meta), TrajectoryFile{stamps, poses},
                                             sim.truth, "perfect");
  save(dir / "expected_evaluation.csv",
       text([&](std::ostream& os) { write_evaluation_csv(os, std::vector<EvaluationRow>{row}); }));
}

void format_samples(const fs::path& dir) {
  fs::create_directories(dir);
  save(dir / "log.jsonl", text([&](std::ostream& os) { write_jsonl(os, sample_log()); }));
  const std::vector<double> stamps = {0.0, 0.1, 0.2};
  const std::vector<Pose2> poses = {Pose2(10.0, 2.0, 1.570796), Pose2(10.0, 2.02, 1.570796),
                                    Pose2(10.001, 2.04, 1.571)};
  save(dir / "trajectory.txt", text([&](std::ostream& os) { write_trajectory(os, stamps, poses); }));
  save(dir / "landmarks.txt", text([&](std::ostream& os) {
         write_landmarks(os, {{1, Vec2(1.02, 0.97)}, {2, Vec2(18.96, 1.01)}, {4, Vec2(1.0, 19.05)}});
       }));
  OccupancyGrid grid(0.5, Vec2(-1.0, -0.5), 4, 3);
  grid.set_logodds({0, 0}, 2.0, true);
  grid.set_logodds({3, 0}, -2.0, true);
  grid.set_logodds({1, 2}, 0.0, true);
  grid.set_logodds({2, 1}, 3.5, true);
  save(dir / "map.pgm", render_pgm(grid));
  save(dir / "map.meta", render_metadata(metadata_for(grid, SensorModel{})));
  GroundTruth truth;
  const Scenario s = standard_scenario(1.0, 4);
  truth.nodes = s.world.uwb_nodes;
  truth.columns = s.world.columns;
  truth.column_pairs = column_pairs(s.world.columns);
  truth.trajectory = {{0.0, Pose2(10.0, 2.0, 1.5707963267948966)}, {0.1, Pose2(10.0, 2.02, 1.5707963267948966)}};
  save(dir / "ground_truth.json", text([&](std::ostream& os) { write_ground_truth(os, truth); }));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    fmt::print(stderr, "usage: make_fixtures <fixtures-dir>\n");
    return 2;
  }
  try {
    const fs::path root(argv[1]);
    perfect_case(root / "perfect");
    format_samples(root / "formats");
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
