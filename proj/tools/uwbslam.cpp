// Command-line front end: simulate a run, run SLAM on a log, evaluate outputs or sweep a parameter.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "uwbslam/eval.hpp"
#include "uwbslam/experiment.hpp"
#include "uwbslam/pipeline.hpp"
#include "uwbslam/sensor_log.hpp"
#include "uwbslam/simulator.hpp"

namespace fs = std::filesystem;
using namespace uwbslam;

namespace {

class CliError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes through a sibling temp file and renames it into place.
void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CliError(fmt::format("cannot write {}", path.string()));
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CliError(fmt::format("failed writing {}", path.string()));
  }
  fs::rename(tmp, path);
}

template <typename F>
void write_with(const fs::path& path, F&& fill) {
  std::ostringstream os;
  fill(os);
  write_atomic(path, os.str());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CliError(fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<int> parse_ids(const std::string& text, char sep) {
  std::vector<int> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CliError(fmt::format("bad node id '{}'", item));
    }
  }
  return ids;
}

SensorLog load_log(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw CliError(fmt::format("cannot read log {}", path.string()));
  return read_jsonl(is);
}

GroundTruth load_truth(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw CliError(fmt::format("cannot read ground truth {}", path.string()));
  return read_ground_truth(is);
}

struct SlamFlags {
  bool stage1_only = false;
  bool no_uwb = false;
  bool no_loops = false;
  std::optional<double> epsilon;
  std::optional<double> sigma;
  std::optional<double> icp_d;
  std::optional<int> icp_iters;
  std::string nodes;
  std::string config;

  void attach(CLI::App* app) {
    app->add_flag("--stage1-only", stage1_only, "Skip loop closure and the second optimization");
    app->add_flag("--no-uwb", no_uwb, "Ignore every UWB range");
    app->add_flag("--no-loops", no_loops, "Do not search for loop closures");
    app->add_option("--epsilon", epsilon, "Submap travel length in m (default 9.0)");
    app->add_option("--sigma", sigma, "Loop fitness threshold in m^2 (default 0.1)");
    app->add_option("--icp-d", icp_d, "ICP outlier distance in m (default 0.1)");
    app->add_option("--icp-iters", icp_iters, "ICP iteration cap (default 300)");
    app->add_option("--nodes", nodes, "Comma-separated UWB node ids to use");
    app->add_option("--config", config, "JSON file overriding pipeline defaults");
  }

  PipelineConfig build() const {
    PipelineConfig c;
    if (!config.empty()) {
      std::ifstream is(config);
      if (!is) throw CliError(fmt::format("cannot read config {}", config));
      c = load_config(is);
    }
    if (epsilon) c.epsilon = *epsilon;
    if (sigma) c.sigma = *sigma;
    if (icp_d) c.icp_d = *icp_d;
    if (icp_iters) c.icp_iterations = *icp_iters;
    if (!nodes.empty()) c.uwb_node_filter = parse_ids(nodes, ',');
    if (no_uwb) c.uwb_node_filter = std::vector<int>{};
    if (no_loops) c.use_loops = false;
    if (stage1_only) c.stage1_only = true;
    c.validate();
    return c;
  }
};

int cmd_simulate(const std::string& scenario, std::uint64_t seed, double duration, int nodes, const fs::path& out) {
  if (scenario != "standard") {
    throw CliError(fmt::format("unknown scenario '{}' (available: standard)", scenario));
  }
  const SimulationOutput sim = simulate_standard(seed, duration, nodes);
  fs::create_directories(out);
  write_with(out / "log.jsonl", [&](std::ostream& os) { write_jsonl(os, sim.log); });
  write_with(out / "ground_truth.json", [&](std::ostream& os) { write_ground_truth(os, sim.truth); });
  fmt::print("simulated {:.1f} s: {} odometry, {} scans, {} ranges from {} nodes -> {}\n", duration,
             sim.log.odometry.size(), sim.log.scans.size(), sim.log.uwb.size(), sim.truth.nodes.size(),
             out.string());
  return 0;
}

void write_run(const RunResult& run, const fs::path& out, const SensorModel& model) {
  fs::create_directories(out);
  write_with(out / "trajectory.txt", [&](std::ostream& os) { write_trajectory(os, run.stamps, run.trajectory); });
  write_with(out / "landmarks.txt", [&](std::ostream& os) { write_landmarks(os, run.landmarks); });
  write_atomic(out / "map.pgm", render_pgm(run.grid));
  write_atomic(out / "map.meta", render_metadata(metadata_for(run.grid, model)));
  write_with(out / "report.csv", [&](std::ostream& os) { run.report.write_csv(os); });
  write_with(out / "stage1_optimizer.csv", [&](std::ostream& os) { run.stage1.report.write_csv(os); });
  if (run.stage2) {
    write_with(out / "loops.csv",
               [&](std::ostream& os) { write_loops_csv(os, run.stage2->submaps, run.stage2->candidates); });
    if (run.stage2->report) {
      write_with(out / "stage2_optimizer.csv", [&](std::ostream& os) { run.stage2->report->write_csv(os); });
    }
  }
}

int cmd_slam(const fs::path& log_path, const fs::path& out, const SlamFlags& flags) {
  const PipelineConfig config = flags.build();
  const SensorLog log = load_log(log_path);
  const RunResult run = run_full(log, config);
  write_run(run, out, config.sensor_model);
  const RunReport& r = run.report;
  fmt::print("{} vertices, {} range edges, {} submaps, {}/{} loops accepted\n", r.vertices, r.range_edges, r.submaps,
             r.loops_accepted, r.loop_candidates);
  fmt::print("timing: stage1 {:.2f} s, stage2 {:.2f} s, map {:.2f} s\n", r.stage1_seconds, r.stage2_seconds,
             r.map_seconds);
  return 0;
}

std::string fmt_row(const std::string& param, const std::string& value, const EvaluationRow& row, int candidates,
                    int accepted) {
  std::string s = fmt::format("{},{},{:.6f},{:.6f},{},{}", param, value, row.mapping.mean_error, row.ate, candidates,
                              accepted);
  for (const auto& p : row.mapping.per_pair) s += fmt::format(",{:.6f}", p.error);
  return s;
}

int cmd_evaluate_run(const fs::path& run_dir, const fs::path& truth_path, const fs::path& out) {
  const GroundTruth truth = load_truth(truth_path);
  const MapMetadata meta = parse_metadata(read_file(run_dir / "map.meta"));
  const OccupancyGrid grid = grid_from_pgm(read_file(run_dir / "map.pgm"), meta);
  std::ifstream ts(run_dir / "trajectory.txt");
  if (!ts) throw CliError(fmt::format("cannot read {}", (run_dir / "trajectory.txt").string()));
  const TrajectoryFile traj = read_trajectory(ts);
  const EvaluationRow row = evaluate_outputs(grid, traj, truth, run_dir.filename().string());
  const std::vector<EvaluationRow> rows{row};
  if (out.empty()) {
    write_evaluation_csv(std::cout, rows);
  } else {
    write_with(out, [&](std::ostream& os) { write_evaluation_csv(os, rows); });
  }
  write_mapping_csv(std::cout, row.mapping);
  return 0;
}

int cmd_sweep(const fs::path& log_path, const fs::path& truth_path, const std::string& sweep, const fs::path& out,
              const SlamFlags& flags) {
  const auto eq = sweep.find('=');
  if (eq == std::string::npos) throw CliError("--sweep expects param=v1,v2,...");
  const std::string param = sweep.substr(0, eq);
  std::vector<std::string> values;
  {
    std::stringstream ss(sweep.substr(eq + 1));
    std::string v;
    while (std::getline(ss, v, ',')) {
      if (!v.empty()) values.push_back(v);
    }
  }
  if (values.empty()) throw CliError("--sweep needs at least one value");
  const PipelineConfig base = flags.build();
  const SensorLog log = load_log(log_path);
  const GroundTruth truth = load_truth(truth_path);

  std::vector<std::string> lines;
  std::string header = "param,value,mean_error,ate,loop_candidates,loops_accepted";
  for (const auto& p : truth.column_pairs) header += "," + p.label;
  lines.push_back(header);
  int failures = 0;
  for (const auto& v : values) {
    PipelineConfig c = base;
    try {
      if (param == "epsilon") {
        c.epsilon = std::stod(v);
      } else if (param == "sigma") {
        c.sigma = std::stod(v);
      } else if (param == "icp_d") {
        c.icp_d = std::stod(v);
      } else if (param == "icp_iters") {
        c.icp_iterations = std::stoi(v);
      } else if (param == "nodes") {
        c.uwb_node_filter = parse_ids(v, '+');
      } else if (param == "variant") {
        if (v == "dead_reckoning") {
          c = variant_config(Variant::kDeadReckoning, base);
        } else if (v == "stage1") {
          c = variant_config(Variant::kStage1, base);
        } else if (v == "full") {
          c = variant_config(Variant::kFull, base);
        } else {
          throw CliError(fmt::format("unknown variant '{}'", v));
        }
      } else {
        throw CliError(fmt::format("cannot sweep '{}' (epsilon, sigma, icp_d, icp_iters, nodes, variant)", param));
      }
    } catch (const std::logic_error&) {
      throw CliError(fmt::format("bad value '{}' for {}", v, param));
    }
    c.validate();
    const RunResult run = run_full(log, c);
    try {
      const EvaluationRow row = evaluate_run(run, truth, v);
      lines.push_back(fmt_row(param, v, row, run.report.loop_candidates, run.report.loops_accepted));
      fmt::print("{}={}: mean error {:.4f} m, ATE {:.4f} m, loops {}/{}, {:.1f} s\n", param, v,
                 row.mapping.mean_error, row.ate, run.report.loops_accepted, run.report.loop_candidates,
                 run.report.stage1_seconds + run.report.stage2_seconds + run.report.map_seconds);
    } catch (const EvalError& e) {
      ++failures;
      lines.push_back(fmt::format("{},{},nan,nan,{},{}", param, v, run.report.loop_candidates,
                                  run.report.loops_accepted));
      fmt::print(stderr, "{}={}: evaluation failed: {}\n", param, v, e.what());
    }
  }
  std::string csv;
  for (const auto& l : lines) csv += l + "\n";
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_atomic(out, csv);
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch 2D SLAM with odometry, UWB ranges and LiDAR loop closures"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic log and its ground truth");
  std::string scenario = "standard";
  std::uint64_t seed = 0;
  double duration = 480.0;
  int nodes = 4;
  std::string sim_out;
  sim->add_option("--scenario", scenario, "Scenario name")->capture_default_str();
  sim->add_option("--seed", seed, "Random seed")->capture_default_str();
  sim->add_option("--duration", duration, "Simulated seconds")->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--nodes", nodes, "Number of UWB nodes (1-4)")->capture_default_str()->check(CLI::Range(1, 4));
  sim->add_option("--out", sim_out, "Output directory")->required();

  auto* slam = app.add_subcommand("slam", "Run the SLAM pipeline on a log");
  std::string log_path;
  std::string slam_out;
  SlamFlags slam_flags;
  slam->add_option("--log", log_path, "JSONL sensor log")->required();
  slam->add_option("--out", slam_out, "Output directory")->required();
  slam_flags.attach(slam);

  auto* ev = app.add_subcommand("evaluate", "Score SLAM outputs against ground truth, or sweep a parameter");
  std::string run_dir;
  std::string truth_path;
  std::string ev_log;
  std::string sweep;
  std::string ev_out;
  SlamFlags ev_flags;
  ev->add_option("--run", run_dir, "Directory written by slam");
  ev->add_option("--truth", truth_path, "Ground-truth JSON")->required();
  ev->add_option("--log", ev_log, "Log to run for --sweep");
  ev->add_option("--sweep", sweep, "param=v1,v2,... (nodes subsets joined with '+')");
  ev->add_option("--out", ev_out, "CSV output file (stdout when omitted)");
  ev_flags.attach(ev);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      return cmd_simulate(scenario, seed, duration, nodes, sim_out);
    }
    if (slam->parsed()) {
      return cmd_slam(log_path, slam_out, slam_flags);
    }
    if (!sweep.empty()) {
      if (ev_log.empty()) throw CliError("--sweep needs --log");
      return cmd_sweep(ev_log, truth_path, sweep, ev_out, ev_flags);
    }
    if (run_dir.empty()) throw CliError("evaluate needs --run or --sweep");
    return cmd_evaluate_run(run_dir, truth_path, ev_out);
  } catch (const LogParseError& e) {
    fmt::print(stderr, "error: malformed log at {}\n", e.what());
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
  }
  return 1;
}
