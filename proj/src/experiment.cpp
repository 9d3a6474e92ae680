#include "uwbslam/experiment.hpp"

namespace uwbslam {

SimulationOutput simulate_standard(std::uint64_t seed, double duration, int num_nodes) {
  const Scenario s = standard_scenario(duration, num_nodes);
  NoiseModel noise;
  noise.seed = seed;
  SimulationOutput out = generate_log(s.world, s.trajectory, SensorRates{}, LidarSpec{}, noise);
  out.log = quantize(out.log);
  return out;
}

EvaluationRow evaluate_outputs(const OccupancyGrid& grid, const TrajectoryFile& trajectory, const GroundTruth& truth,
                               const std::string& label) {
  const std::vector<Pose2> reference = truth_at(truth, trajectory.stamps);
  // true centres carried into the estimate's frame; distances ignore the rigid offset
  const Transform2 to_estimate = inverse(align_trajectories(trajectory.poses, reference));
  std::map<int, Vec2> seeds;
  for (const auto& c : truth.columns) seeds[c.label] = to_estimate.apply(c.center);
  EvaluationRow row;
  row.label = label;
  row.mapping = mapping_error(extract_column_centers(grid, seeds), truth.column_pairs);
  row.ate = trajectory_ate(trajectory.poses, reference);
  return row;
}

EvaluationRow evaluate_run(const RunResult& run, const GroundTruth& truth, const std::string& label) {
  return evaluate_outputs(run.grid, TrajectoryFile{run.stamps, run.trajectory}, truth, label);
}

PipelineConfig variant_config(Variant v, PipelineConfig base) {
  switch (v) {
    case Variant::kDeadReckoning:
      base.uwb_node_filter = std::vector<int>{};
      base.use_loops = false;
      base.stage1_only = true;
      break;
    case Variant::kStage1:
      base.stage1_only = true;
      break;
    case Variant::kFull:
      base.stage1_only = false;
      base.use_loops = true;
      break;
  }
  return base;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kDeadReckoning:
      return "dead_reckoning";
    case Variant::kStage1:
      return "stage1";
    case Variant::kFull:
      return "full";
  }
  return "unknown";
}

}  // namespace uwbslam
