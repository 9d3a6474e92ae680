#include "uwbslam/pipeline.hpp"

#include <fmt/format.h>

#include <Eigen/SVD>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>

namespace uwbslam {
namespace {

using json = nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double range_cost(const Vec2& u, std::span<const Pose2> poses, std::span<const double> distances) {
  double c = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const double r = (u - poses[i].translation()).norm() - distances[i];
    c += r * r;
  }
  return c;
}

// A few Gauss-Newton steps on the range residuals, keeping only improving ones.
Vec2 refine_uwb(Vec2 u, std::span<const Pose2> poses, std::span<const double> distances) {
  double cost = range_cost(u, poses, distances);
  for (int it = 0; it < 10; ++it) {
    Mat2 h = Mat2::Zero();
    Vec2 g = Vec2::Zero();
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const Vec2 diff = u - poses[i].translation();
      const double range = diff.norm();
      if (range < 1e-12) continue;
      const Vec2 jac = diff / range;
      const double r = range - distances[i];
      h += jac * jac.transpose();
      g += jac * r;
    }
    const Vec2 step = h.ldlt().solve(-g);
    if (!step.allFinite()) break;
    const Vec2 trial = u + step;
    const double trial_cost = range_cost(trial, poses, distances);
    if (!(trial_cost < cost)) break;
    u = trial;
    cost = trial_cost;
    if (step.norm() < 1e-12) break;
  }
  return u;
}

UwbInitResult fallback(std::span<const Pose2> poses, std::span<const double> distances, std::string reason) {
  const Pose2& p = poses.front();
  UwbInitResult r;
  r.position = p.translation() + distances.front() * Vec2(std::cos(p.theta()), std::sin(p.theta()));
  r.fallback = true;
  r.reason = std::move(reason);
  return r;
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(epsilon >= 0.0) || !(sigma > 0.0) || !(icp_d > 0.0) || icp_iterations < 1) {
    throw ConfigError("epsilon must be >= 0; sigma, d and ICP iterations must be positive");
  }
  if (!(vertex_translation > 0.0) || !(vertex_rotation > 0.0) || !(range_window > 0.0) ||
      !(loop_search_radius > 0.0) || loop_min_index_gap < 2 || icp_min_correspondences < 2) {
    throw ConfigError("vertex spacing, range window and loop search radius must be positive; index gap >= 2");
  }
  if (!(grid_resolution > 0.0) || !(odometry_noise.sigma_translation > 0.0) ||
      !(odometry_noise.sigma_rotation > 0.0) || !(range_noise.sigma > 0.0)) {
    throw ConfigError("grid resolution and noise sigmas must be positive");
  }
  if (!(sensor_model.l_occ > 0.0) || !(sensor_model.l_free < 0.0) || !(sensor_model.l_min < sensor_model.l_max)) {
    throw ConfigError("sensor model needs l_occ > 0 > l_free and l_min < l_max");
  }
  lm.validate();
}

bool PipelineConfig::uses_node(int id) const {
  if (!uwb_node_filter) return true;
  return std::find(uwb_node_filter->begin(), uwb_node_filter->end(), id) != uwb_node_filter->end();
}

LoopSettings PipelineConfig::loop_settings() const {
  LoopSettings s;
  s.sigma = sigma;
  s.icp.max_iterations = icp_iterations;
  s.icp.outlier_distance = icp_d;
  s.icp.min_correspondences = icp_min_correspondences;
  s.search_radius = loop_search_radius;
  s.min_index_gap = loop_min_index_gap;
  s.noise = loop_noise;
  return s;
}

PipelineConfig load_config(std::istream& is, PipelineConfig c) {
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  static const char* kKnown[] = {"epsilon", "sigma", "icp_d", "icp_iterations", "nodes", "stage1_only", "use_loops",
                                 "vertex_translation", "vertex_rotation", "range_window", "loop_search_radius",
                                 "loop_min_index_gap", "icp_min_correspondences", "odometry_sigma_translation",
                                 "odometry_sigma_rotation", "range_sigma", "loop_sigma_translation",
                                 "loop_sigma_rotation", "voxel_size", "statistical_k", "statistical_stddev_mult",
                                 "radius", "radius_min_neighbors", "l_occ", "l_free", "l_min", "l_max",
                                 "grid_resolution", "lm_max_iterations", "lm_initial_lambda"};
  for (const auto& item : j.items()) {
    if (std::none_of(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return item.key() == k; })) {
      throw ConfigError(fmt::format("unknown config key '{}'", item.key()));
    }
  }
  read_key(j, "epsilon", c.epsilon);
  read_key(j, "sigma", c.sigma);
  read_key(j, "icp_d", c.icp_d);
  read_key(j, "icp_iterations", c.icp_iterations);
  if (j.contains("nodes")) {
    if (j["nodes"].is_null()) {
      c.uwb_node_filter.reset();
    } else {
      std::vector<int> ids;
      read_key(j, "nodes", ids);
      c.uwb_node_filter = ids;
    }
  }
  read_key(j, "stage1_only", c.stage1_only);
  read_key(j, "use_loops", c.use_loops);
  read_key(j, "vertex_translation", c.vertex_translation);
  read_key(j, "vertex_rotation", c.vertex_rotation);
  read_key(j, "range_window", c.range_window);
  read_key(j, "loop_search_radius", c.loop_search_radius);
  read_key(j, "loop_min_index_gap", c.loop_min_index_gap);
  read_key(j, "icp_min_correspondences", c.icp_min_correspondences);
  read_key(j, "odometry_sigma_translation", c.odometry_noise.sigma_translation);
  read_key(j, "odometry_sigma_rotation", c.odometry_noise.sigma_rotation);
  read_key(j, "range_sigma", c.range_noise.sigma);
  read_key(j, "loop_sigma_translation", c.loop_noise.sigma_translation);
  read_key(j, "loop_sigma_rotation", c.loop_noise.sigma_rotation);
  read_key(j, "voxel_size", c.filters.voxel_size);
  read_key(j, "statistical_k", c.filters.statistical_k);
  read_key(j, "statistical_stddev_mult", c.filters.statistical_stddev_mult);
  read_key(j, "radius", c.filters.radius);
  read_key(j, "radius_min_neighbors", c.filters.radius_min_neighbors);
  read_key(j, "l_occ", c.sensor_model.l_occ);
  read_key(j, "l_free", c.sensor_model.l_free);
  read_key(j, "l_min", c.sensor_model.l_min);
  read_key(j, "l_max", c.sensor_model.l_max);
  read_key(j, "grid_resolution", c.grid_resolution);
  read_key(j, "lm_max_iterations", c.lm.max_iterations);
  read_key(j, "lm_initial_lambda", c.lm.initial_lambda);
  c.validate();
  return c;
}

UwbInitResult initialize_uwb(std::span<const Pose2> poses, std::span<const double> distances) {
  if (poses.size() != distances.size() || poses.empty()) {
    throw std::invalid_argument("initialize_uwb needs one pose per range and at least one range");
  }
  const std::size_t n = poses.size();
  if (n < 3) {
    return fallback(poses, distances, "fewer than three ranges");
  }
  Vec2 mean_p = Vec2::Zero();
  double mean_p2 = 0.0;
  double mean_d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_p += poses[i].translation();
    mean_p2 += poses[i].translation().squaredNorm();
    mean_d2 += distances[i] * distances[i];
  }
  mean_p /= static_cast<double>(n);
  mean_p2 /= static_cast<double>(n);
  mean_d2 /= static_cast<double>(n);

  // |p_i - u|^2 = d_i^2, minus its mean over i, is linear in u
  Eigen::MatrixXd a(n, 2);
  Eigen::VectorXd b(n);
  double baseline = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = poses[i].translation();
    a.row(static_cast<Eigen::Index>(i)) = 2.0 * (p - mean_p).transpose();
    b(static_cast<Eigen::Index>(i)) = (p.squaredNorm() - mean_p2) - (distances[i] * distances[i] - mean_d2);
    baseline = std::max(baseline, (p - poses[0].translation()).norm());
  }
  if (baseline < 1.0) {
    return fallback(poses, distances, "baseline shorter than 1 m");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (s(1) > 0.0 && s(0) / s(1) <= 1e6) {
    UwbInitResult r;
    r.position = refine_uwb(svd.solve(b), poses, distances);
    return r;
  }

  // Poses on one line: the node is fixed along the line, but its side is a mirror ambiguity.
  // Take the left of the direction of travel; off the line the perpendicular stays observable.
  Vec2 e = svd.matrixV().col(0);
  if (e.dot(poses.back().translation() - poses.front().translation()) < 0.0) e = -e;
  const Vec2 normal(-e.y(), e.x());
  double mean_s2 = 0.0;
  std::vector<double> along(n);
  for (std::size_t i = 0; i < n; ++i) {
    along[i] = (poses[i].translation() - mean_p).dot(e);
    mean_s2 += along[i] * along[i];
  }
  mean_s2 /= static_cast<double>(n);
  // (s_i - alpha)^2 + beta^2 = d_i^2, minus its mean over i, is linear in alpha
  double num = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += along[i] * (along[i] * along[i] - mean_s2 - distances[i] * distances[i] + mean_d2);
  }
  const double alpha = num / (2.0 * mean_s2 * static_cast<double>(n));
  double beta2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    beta2 += distances[i] * distances[i] - (along[i] - alpha) * (along[i] - alpha);
  }
  beta2 /= static_cast<double>(n);
  UwbInitResult r;
  r.position = refine_uwb(mean_p + alpha * e + std::sqrt(std::max(beta2, 0.0)) * normal, poses, distances);
  r.fallback = true;
  r.reason = "collinear poses; placed left of travel";
  return r;
}

std::vector<std::size_t> select_vertices(std::span<const OdomRecord> odometry, double translation, double rotation) {
  std::vector<std::size_t> out;
  if (odometry.empty()) return out;
  out.push_back(0);
  for (std::size_t k = 1; k < odometry.size(); ++k) {
    const Pose2 d = between(odometry[out.back()].pose, odometry[k].pose);
    if (d.translation().norm() >= translation || std::abs(d.theta()) >= rotation) {
      out.push_back(k);
    }
  }
  return out;
}

Pose2 odometry_at(std::span<const OdomRecord> odometry, double stamp) {
  if (odometry.empty()) {
    throw PipelineError("no odometry to interpolate");
  }
  if (stamp <= odometry.front().stamp) return odometry.front().pose;
  if (stamp >= odometry.back().stamp) return odometry.back().pose;
  const auto it = std::upper_bound(odometry.begin(), odometry.end(), stamp,
                                   [](double t, const OdomRecord& r) { return t < r.stamp; });
  const OdomRecord& b = *it;
  const OdomRecord& a = *(it - 1);
  const double span = b.stamp - a.stamp;
  if (span <= 0.0) return b.pose;
  const double s = (stamp - a.stamp) / span;
  const Vec2 t = a.pose.translation() + s * (b.pose.translation() - a.pose.translation());
  const double th = a.pose.theta() + s * normalize_angle(b.pose.theta() - a.pose.theta());
  return {t, th};
}

std::size_t nearest_stamp(std::span<const double> stamps, double t) {
  if (stamps.empty()) {
    throw PipelineError("no stamps to search");
  }
  const auto it = std::lower_bound(stamps.begin(), stamps.end(), t);
  if (it == stamps.begin()) return 0;
  if (it == stamps.end()) return stamps.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - stamps.begin());
  return (t - stamps[hi - 1] <= stamps[hi] - t) ? hi - 1 : hi;
}

int Stage2Result::accepted_loops() const {
  return static_cast<int>(std::count_if(candidates.begin(), candidates.end(),
                                        [](const LoopCandidate& c) { return c.accepted; }));
}

Stage1Result run_stage1(const SensorLog& log, const PipelineConfig& config) {
  config.validate();
  if (log.odometry.empty()) {
    throw PipelineError("log has no odometry");
  }
  Stage1Result out;
  const auto keep = select_vertices(log.odometry, config.vertex_translation, config.vertex_rotation);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const OdomRecord& r = log.odometry[keep[k]];
    out.graph.add_robot_vertex(r.stamp, r.pose);
    out.stamps.push_back(r.stamp);
    out.dead_reckoning.push_back(r.pose);
    if (k > 0) {
      out.graph.add_odometry_edge(static_cast<int>(k - 1), log.odometry[keep[k - 1]].pose, r.pose,
                                  config.odometry_noise);
    }
  }

  // associate ranges with the vertex nearest in time
  struct Assoc {
    int vertex;
    double distance;
    Vec2 offset;
  };
  std::map<int, std::vector<Assoc>> by_node;
  for (const auto& u : log.uwb) {
    if (!config.uses_node(u.node_id)) continue;
    const std::size_t v = nearest_stamp(out.stamps, u.stamp);
    if (std::abs(out.stamps[v] - u.stamp) > config.range_window || !(u.distance > 0.0)) {
      ++out.dropped_ranges;
      continue;
    }
    // where the robot was at the range stamp, seen from the vertex
    const Vec2 offset =
        between(odometry_at(log.odometry, out.stamps[v]), odometry_at(log.odometry, u.stamp)).translation();
    by_node[u.node_id].push_back({static_cast<int>(v), u.distance, offset});
  }
  for (const auto& [id, ranges] : by_node) {
    std::vector<Pose2> poses;
    std::vector<double> distances;
    for (const auto& a : ranges) {
      const Pose2& p = out.dead_reckoning[static_cast<std::size_t>(a.vertex)];
      poses.emplace_back(p.transform_point(a.offset), p.theta());
      distances.push_back(a.distance);
    }
    const UwbInitResult init = initialize_uwb(poses, distances);
    out.landmark_init[id] = init;
    out.graph.add_uwb_vertex(id, init.position);
    for (const auto& a : ranges) {
      out.graph.add_range_edge(RangeEdge{a.vertex, id, a.distance, config.range_noise.precision(), a.offset});
    }
  }

  const OptimizationResult opt = optimize(out.graph, out.graph.assignment(), config.lm);
  out.graph.set_assignment(opt.assignment);
  out.report = opt.report;
  out.poses = opt.assignment.poses;
  out.landmarks = opt.assignment.nodes;
  return out;
}

std::vector<Pose2> scan_poses(const SensorLog& log, std::span<const double> vertex_stamps,
                              std::span<const Pose2> vertex_poses) {
  std::vector<Pose2> out;
  out.reserve(log.scans.size());
  for (const auto& scan : log.scans) {
    const std::size_t v = nearest_stamp(vertex_stamps, scan.stamp);
    const Pose2 delta =
        between(odometry_at(log.odometry, vertex_stamps[v]), odometry_at(log.odometry, scan.stamp));
    out.push_back(compose(vertex_poses[v], delta));
  }
  return out;
}

Stage2Result run_stage2(const Stage1Result& stage1, const SensorLog& log, const PipelineConfig& config) {
  config.validate();
  // one keyframe scan per vertex: the scan nearest in time
  std::vector<double> scan_stamps;
  for (const auto& s : log.scans) scan_stamps.push_back(s.stamp);
  std::vector<Pose2> poses;
  std::vector<Scan> scans;
  std::vector<int> vertices;
  if (!scan_stamps.empty()) {
    for (std::size_t v = 0; v < stage1.stamps.size(); ++v) {
      const std::size_t k = nearest_stamp(scan_stamps, stage1.stamps[v]);
      if (std::abs(scan_stamps[k] - stage1.stamps[v]) > config.range_window) continue;
      const Pose2 delta =
          between(odometry_at(log.odometry, stage1.stamps[v]), odometry_at(log.odometry, scan_stamps[k]));
      poses.push_back(compose(stage1.poses[v], delta));
      scans.push_back(log.scans[k]);
      vertices.push_back(static_cast<int>(v));
    }
  }
  std::vector<Submap> submaps = build_submaps(poses, scans, vertices, config.epsilon, config.filters);
  std::vector<LoopCandidate> candidates;
  if (config.use_loops) {
    candidates = detect_loop_candidates(submaps, config.loop_settings());
  }
  return run_stage2_with_candidates(stage1, std::move(submaps), std::move(candidates), config);
}

Stage2Result run_stage2_with_candidates(const Stage1Result& stage1, std::vector<Submap> submaps,
                                        std::vector<LoopCandidate> candidates, const PipelineConfig& config) {
  const LoopSettings settings = config.loop_settings();
  for (auto& c : candidates) {
    c.accepted = c.result.has_value() && accept_loop(*c.result, settings.sigma, settings.icp);
  }
  Stage2Result out;
  out.graph = stage1.graph;
  out.poses = stage1.poses;
  out.landmarks = stage1.landmarks;
  const auto edges = loop_edges(submaps, candidates, settings.noise);
  out.submaps = std::move(submaps);
  out.candidates = std::move(candidates);
  if (edges.empty()) {
    fmt::print(stderr, "warning: no loop closure accepted; keeping the first-stage estimate\n");
    return out;
  }
  for (const auto& e : edges) {
    out.graph.add_loop_edge(e);
  }
  const OptimizationResult opt = optimize(out.graph, out.graph.assignment(), config.lm);
  out.graph.set_assignment(opt.assignment);
  out.poses = opt.assignment.poses;
  out.landmarks = opt.assignment.nodes;
  out.report = opt.report;
  return out;
}

OccupancyGrid build_map(const SensorLog& log, std::span<const double> vertex_stamps,
                        std::span<const Pose2> vertex_poses, const PipelineConfig& config) {
  double range_max = 0.0;
  for (const auto& s : log.scans) range_max = std::max(range_max, s.range_max);
  OccupancyGrid grid = OccupancyGrid::covering(vertex_poses, range_max, config.grid_resolution);
  if (log.scans.empty()) {
    return grid;
  }
  const auto poses = scan_poses(log, vertex_stamps, vertex_poses);
  for (std::size_t k = 0; k < log.scans.size(); ++k) {
    integrate_scan(grid, poses[k], log.scans[k], config.sensor_model);
  }
  return grid;
}

void RunReport::write_csv(std::ostream& os) const {
  os << "key,value\n";
  os << fmt::format("vertices,{}\n", vertices);
  os << fmt::format("range_edges,{}\n", range_edges);
  os << fmt::format("dropped_ranges,{}\n", dropped_ranges);
  os << fmt::format("landmark_fallbacks,{}\n", landmark_fallbacks);
  os << fmt::format("stage1_initial_cost,{:.9g}\n", stage1_initial_cost);
  os << fmt::format("stage1_final_cost,{:.9g}\n", stage1_final_cost);
  os << fmt::format("stage1_iterations,{}\n", stage1_iterations);
  os << fmt::format("stage1_termination,{}\n", stage1_termination);
  os << fmt::format("submaps,{}\n", submaps);
  os << fmt::format("loop_candidates,{}\n", loop_candidates);
  os << fmt::format("loops_accepted,{}\n", loops_accepted);
  os << fmt::format("stage2_run,{}\n", stage2_run ? 1 : 0);
  os << fmt::format("stage2_initial_cost,{:.9g}\n", stage2_initial_cost);
  os << fmt::format("stage2_final_cost,{:.9g}\n", stage2_final_cost);
  os << fmt::format("stage2_iterations,{}\n", stage2_iterations);
  os << fmt::format("stage2_termination,{}\n", stage2_termination);
}

RunResult run_full(const SensorLog& log, const PipelineConfig& config) {
  config.validate();
  RunResult out;
  auto t0 = std::chrono::steady_clock::now();
  out.stage1 = run_stage1(log, config);
  out.report.stage1_seconds = seconds_since(t0);
  out.stamps = out.stage1.stamps;
  out.trajectory = out.stage1.poses;
  out.landmarks = out.stage1.landmarks;

  RunReport& r = out.report;
  r.vertices = static_cast<int>(out.stage1.stamps.size());
  r.range_edges = static_cast<int>(out.stage1.graph.range_edges().size());
  r.dropped_ranges = out.stage1.dropped_ranges;
  for (const auto& [id, init] : out.stage1.landmark_init) {
    if (init.fallback) ++r.landmark_fallbacks;
  }
  r.stage1_initial_cost = out.stage1.report.initial_cost;
  r.stage1_final_cost = out.stage1.report.final_cost;
  r.stage1_iterations = static_cast<int>(out.stage1.report.iterations.size());
  r.stage1_termination = to_string(out.stage1.report.termination);

  if (!config.stage1_only) {
    t0 = std::chrono::steady_clock::now();
    out.stage2 = run_stage2(out.stage1, log, config);
    r.stage2_seconds = seconds_since(t0);
    out.trajectory = out.stage2->poses;
    out.landmarks = out.stage2->landmarks;
    r.submaps = static_cast<int>(out.stage2->submaps.size());
    r.loop_candidates = static_cast<int>(out.stage2->candidates.size());
    r.loops_accepted = out.stage2->accepted_loops();
    if (out.stage2->report) {
      r.stage2_run = true;
      r.stage2_initial_cost = out.stage2->report->initial_cost;
      r.stage2_final_cost = out.stage2->report->final_cost;
      r.stage2_iterations = static_cast<int>(out.stage2->report->iterations.size());
      r.stage2_termination = to_string(out.stage2->report->termination);
    }
  }

  t0 = std::chrono::steady_clock::now();
  out.grid = build_map(log, out.stamps, out.trajectory, config);
  r.map_seconds = seconds_since(t0);
  return out;
}

void write_trajectory(std::ostream& os, std::span<const double> stamps, std::span<const Pose2> poses) {
  if (stamps.size() != poses.size()) {
    throw std::invalid_argument("one stamp per pose required");
  }
  for (std::size_t k = 0; k < poses.size(); ++k) {
    os << fmt::format("{:.6f} {:.9f} {:.9f} {:.9f}\n", stamps[k], poses[k].x(), poses[k].y(), poses[k].theta());
  }
}

void write_landmarks(std::ostream& os, const std::map<int, Vec2>& landmarks) {
  for (const auto& [id, p] : landmarks) {
    os << fmt::format("{} {:.9f} {:.9f}\n", id, p.x(), p.y());
  }
}

TrajectoryFile read_trajectory(std::istream& is) {
  TrajectoryFile t;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    double s = 0, x = 0, y = 0, th = 0;
    if (!(ls >> s >> x >> y >> th)) {
      throw PipelineError(fmt::format("trajectory line {}: expected 'stamp x y theta'", line_no));
    }
    t.stamps.push_back(s);
    t.poses.emplace_back(x, y, th);
  }
  return t;
}

std::map<int, Vec2> read_landmarks(std::istream& is) {
  std::map<int, Vec2> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int id = 0;
    double x = 0, y = 0;
    if (!(ls >> id >> x >> y)) {
      throw PipelineError(fmt::format("landmark line {}: expected 'id x y'", line_no));
    }
    out[id] = Vec2(x, y);
  }
  return out;
}

}  // namespace uwbslam
