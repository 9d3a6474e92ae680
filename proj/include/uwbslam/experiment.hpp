#pragma once

#include <cstdint>
#include <string>

#include "uwbslam/eval.hpp"
#include "uwbslam/pipeline.hpp"
#include "uwbslam/simulator.hpp"

namespace uwbslam {

/// Standard scenario with default rates, lidar and noise. The log is quantized to its
/// file precision so in-memory runs match runs from disk.
SimulationOutput simulate_standard(std::uint64_t seed, double duration = 480.0, int num_nodes = 4);

/// Column centres from the grid (seeded at the true centres), mapping error and ATE.
EvaluationRow evaluate_run(const RunResult& run, const GroundTruth& truth, const std::string& label);

/// Same from saved outputs.
EvaluationRow evaluate_outputs(const OccupancyGrid& grid, const TrajectoryFile& trajectory, const GroundTruth& truth,
                               const std::string& label);

/// Pipeline variants compared in the ablation: odometry only, first optimization only, full.
enum class Variant { kDeadReckoning, kStage1, kFull };
PipelineConfig variant_config(Variant v, PipelineConfig base = {});
std::string to_string(Variant v);

}  // namespace uwbslam
