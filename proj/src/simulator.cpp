#include "uwbslam/simulator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <json.hpp>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

namespace uwbslam {
namespace {

constexpr int kClockHz = 100;

int ticks_per_sample(double rate_hz, const char* what) {
  if (!(rate_hz > 0.0)) {
    throw SimulationError(fmt::format("{} rate must be positive", what));
  }
  const double period = kClockHz / rate_hz;
  const long rounded = std::lround(period);
  if (rounded < 1 || std::abs(period - static_cast<double>(rounded)) > 1e-9) {
    throw SimulationError(fmt::format("{} rate {} Hz does not divide the {} Hz clock", what, rate_hz, kClockHz));
  }
  return static_cast<int>(rounded);
}

double stamp_of(long tick) { return static_cast<double>(tick) / kClockHz; }

// Smallest t >= 0 with origin + t*dir on the segment, or infinity.
double ray_segment(const Vec2& origin, const Vec2& dir, const Segment& s) {
  const Vec2 e = s.b - s.a;
  const double denom = dir.x() * e.y() - dir.y() * e.x();
  if (std::abs(denom) < 1e-15) {
    return std::numeric_limits<double>::infinity();
  }
  const Vec2 w = s.a - origin;
  const double t = (w.x() * e.y() - w.y() * e.x()) / denom;
  const double u = (w.x() * dir.y() - w.y() * dir.x()) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) {
    return std::numeric_limits<double>::infinity();
  }
  return t;
}

double ray_circle(const Vec2& origin, const Vec2& dir, const Column& c) {
  const Vec2 oc = origin - c.center;
  const double b = dir.dot(oc);
  const double cc = oc.squaredNorm() - c.radius * c.radius;
  const double disc = b * b - cc;
  if (disc < 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  const double root = std::sqrt(disc);
  const double t0 = -b - root;
  if (t0 >= 0.0) {
    return t0;
  }
  const double t1 = -b + root;
  return t1 >= 0.0 ? t1 : std::numeric_limits<double>::infinity();
}

}  // namespace

bool World::inside(const Vec2& p) const {
  return p.x() >= bounds_min.x() && p.y() >= bounds_min.y() && p.x() <= bounds_max.x() && p.y() <= bounds_max.y();
}

void World::validate() const {
  for (const auto& s : segments) {
    if (!inside(s.a) || !inside(s.b)) throw SimulationError("wall segment outside world bounds");
  }
  for (const auto& c : columns) {
    if (!(c.radius > 0.0) || !inside(c.center)) throw SimulationError("column outside world bounds");
  }
  for (std::size_t i = 0; i < uwb_nodes.size(); ++i) {
    if (!inside(uwb_nodes[i].position)) throw SimulationError("UWB node outside world bounds");
    for (std::size_t j = 0; j < i; ++j) {
      if (uwb_nodes[i].id == uwb_nodes[j].id) throw SimulationError("duplicate UWB node id");
    }
  }
}

NoiseModel NoiseModel::zero(std::uint64_t seed) {
  NoiseModel n;
  n.odom_trans_sigma = 0.0;
  n.odom_rot_sigma = 0.0;
  n.uwb_sigma = 0.0;
  n.uwb_nlos_prob = 0.0;
  n.uwb_nlos_bias = 0.0;
  n.lidar_sigma = 0.0;
  n.seed = seed;
  return n;
}

void NoiseModel::validate() const {
  if (odom_trans_sigma < 0.0 || odom_rot_sigma < 0.0 || uwb_sigma < 0.0 || lidar_sigma < 0.0 ||
      !(uwb_nlos_prob >= 0.0 && uwb_nlos_prob <= 1.0)) {
    throw SimulationError("noise sigmas must be non-negative and probabilities within [0, 1]");
  }
}

std::optional<double> raycast(const World& world, const Vec2& origin, double angle, double max_range) {
  const Vec2 dir(std::cos(angle), std::sin(angle));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : world.segments) {
    best = std::min(best, ray_segment(origin, dir, s));
  }
  for (const auto& c : world.columns) {
    best = std::min(best, ray_circle(origin, dir, c));
  }
  if (!(best <= max_range)) {
    return std::nullopt;
  }
  return best;
}

bool line_of_sight_blocked(const World& world, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double len = d.norm();
  if (len < 1e-12) {
    return false;
  }
  const Vec2 dir = d / len;
  for (const auto& s : world.segments) {
    if (ray_segment(a, dir, s) < len) return true;
  }
  for (const auto& c : world.columns) {
    if (ray_circle(a, dir, c) < len) return true;
  }
  return false;
}

std::vector<StampedPose> sample_trajectory(const TrajectorySpec& spec) {
  if (spec.waypoints.size() < 2 || !(spec.speed > 0.0) || !(spec.turn_rate > 0.0) || !(spec.duration > 0.0)) {
    throw SimulationError("trajectory needs two waypoints and positive speed, turn rate and duration");
  }
  const long ticks = std::lround(spec.duration * kClockHz);
  const double dt = 1.0 / kClockHz;
  const std::size_t n = spec.waypoints.size();
  std::vector<StampedPose> out;
  out.reserve(static_cast<std::size_t>(ticks) + 1);
  Vec2 pos = spec.waypoints[0];
  double heading = normalize_angle(spec.start_heading);
  std::size_t target = 1;
  out.push_back({0.0, Pose2(pos, heading)});
  for (long tick = 1; tick <= ticks; ++tick) {
    double remaining = dt;
    for (int guard = 0; remaining > 1e-12 && guard < 16; ++guard) {
      const Vec2 d = spec.waypoints[target] - pos;
      const double dist = d.norm();
      if (dist < 1e-9) {
        pos = spec.waypoints[target];
        target = (target + 1) % n;
        continue;
      }
      const double desired = std::atan2(d.y(), d.x());
      const double err = normalize_angle(desired - heading);
      if (std::abs(err) > 1e-12) {
        const double need = std::abs(err) / spec.turn_rate;
        if (need <= remaining) {
          heading = desired;
          remaining -= need;
        } else {
          heading = normalize_angle(heading + std::copysign(spec.turn_rate * remaining, err));
          remaining = 0.0;
        }
      } else {
        const double need = dist / spec.speed;
        if (need <= remaining) {
          pos = spec.waypoints[target];
          target = (target + 1) % n;
          remaining -= need;
        } else {
          pos += spec.speed * remaining * Vec2(std::cos(heading), std::sin(heading));
          remaining = 0.0;
        }
      }
    }
    out.push_back({stamp_of(tick), Pose2(pos, heading)});
  }
  return out;
}

SimulationOutput generate_log(const World& world, const TrajectorySpec& trajectory, const SensorRates& rates,
                              const LidarSpec& lidar, const NoiseModel& noise) {
  world.validate();
  noise.validate();
  if (lidar.beams < 1 || !(lidar.range_max > 0.0) || !(lidar.angle_increment > 0.0)) {
    throw SimulationError("invalid lidar spec");
  }
  const int odom_period = ticks_per_sample(rates.odom_hz, "odometry");
  const int lidar_period = ticks_per_sample(rates.lidar_hz, "lidar");
  const int uwb_period = ticks_per_sample(rates.uwb_hz, "uwb");

  const auto gt = sample_trajectory(trajectory);
  for (const auto& s : gt) {
    if (!world.inside(s.pose.translation())) {
      throw TrajectoryOutOfBoundsError(fmt::format("trajectory leaves the world at t={:.2f} s", s.stamp));
    }
  }
  const long last_tick = static_cast<long>(gt.size()) - 1;

  std::seed_seq odom_seed{noise.seed, std::uint64_t{1}};
  std::seed_seq lidar_seed{noise.seed, std::uint64_t{2}};
  std::seed_seq uwb_seed{noise.seed, std::uint64_t{3}};
  std::mt19937_64 odom_rng(odom_seed);
  std::mt19937_64 lidar_rng(lidar_seed);
  std::mt19937_64 uwb_rng(uwb_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  SimulationOutput out;
  out.truth.nodes = world.uwb_nodes;
  out.truth.columns = world.columns;
  out.truth.column_pairs = column_pairs(world.columns);

  // odometry: noisy increments of the true motion, integrated from the true start pose
  Pose2 odom = gt[0].pose;
  long prev_tick = 0;
  for (long tick = 0; tick <= last_tick; tick += odom_period) {
    if (tick > 0) {
      const Pose2 delta = between(gt[prev_tick].pose, gt[tick].pose);
      const double motion = delta.translation().norm() + std::abs(delta.theta());
      const double scale = std::sqrt(motion / 0.1);
      const double nx = gauss(odom_rng);
      const double ny = gauss(odom_rng);
      const double nt = gauss(odom_rng);
      const Pose2 noisy(delta.x() + noise.odom_trans_sigma * scale * nx,
                        delta.y() + noise.odom_trans_sigma * scale * ny,
                        delta.theta() + noise.odom_rot_sigma * scale * nt);
      odom = compose(odom, noisy);
    }
    out.log.odometry.push_back({stamp_of(tick), odom});
    out.truth.trajectory.push_back({stamp_of(tick), gt[tick].pose});
    prev_tick = tick;
  }

  // lidar, offset by half a period from odometry
  for (long tick = lidar_period / 2; tick <= last_tick; tick += lidar_period) {
    const Pose2& pose = gt[tick].pose;
    Scan scan;
    scan.stamp = stamp_of(tick);
    scan.angle_min = lidar.angle_min;
    scan.angle_increment = lidar.angle_increment;
    scan.range_max = lidar.range_max;
    scan.ranges.resize(static_cast<std::size_t>(lidar.beams));
    for (int k = 0; k < lidar.beams; ++k) {
      const double angle = pose.theta() + scan.beam_angle(static_cast<std::size_t>(k));
      const auto hit = raycast(world, pose.translation(), angle, lidar.range_max);
      const double n = gauss(lidar_rng);
      double r = std::numeric_limits<double>::infinity();
      if (hit) {
        r = *hit + noise.lidar_sigma * n;
        if (r > lidar.range_max || r <= 0.0) {
          r = std::numeric_limits<double>::infinity();
        }
      }
      scan.ranges[static_cast<std::size_t>(k)] = r;
    }
    out.log.scans.push_back(std::move(scan));
  }

  // uwb, nodes staggered inside each period
  for (long tick = 0; tick <= last_tick; ++tick) {
    for (std::size_t n = 0; n < world.uwb_nodes.size(); ++n) {
      const long offset = static_cast<long>((2 + 4 * n) % static_cast<std::size_t>(uwb_period));
      if (tick < offset || (tick - offset) % uwb_period != 0) {
        continue;
      }
      const UwbNode& node = world.uwb_nodes[n];
      const Vec2 robot = gt[tick].pose.translation();
      const double truth = (robot - node.position).norm();
      const double g = gauss(uwb_rng);
      const double u = uniform(uwb_rng);
      double measured = truth + noise.uwb_sigma * g;
      if (u < noise.uwb_nlos_prob && line_of_sight_blocked(world, robot, node.position)) {
        measured += noise.uwb_nlos_bias;
      }
      out.log.uwb.push_back({stamp_of(tick), node.id, std::max(measured, 1e-3)});
    }
  }
  return out;
}

Scenario standard_scenario(double duration, int num_nodes) {
  if (num_nodes < 1 || num_nodes > 4) {
    throw SimulationError("standard scenario supports 1 to 4 UWB nodes");
  }
  Scenario s;
  World& w = s.world;
  w.bounds_min = Vec2(0.0, 0.0);
  w.bounds_max = Vec2(20.0, 20.0);
  w.segments = {{{0.0, 0.0}, {20.0, 0.0}},
                {{20.0, 0.0}, {20.0, 20.0}},
                {{20.0, 20.0}, {0.0, 20.0}},
                {{0.0, 20.0}, {0.0, 0.0}}};
  // odd labels on the left (x = 7), even on the right (x = 13), numbered top to bottom
  const double rows[4] = {16.0, 12.0, 8.0, 4.0};
  for (int r = 0; r < 4; ++r) {
    w.columns.push_back({2 * r + 1, {7.0, rows[r]}, 0.3});
    w.columns.push_back({2 * r + 2, {13.0, rows[r]}, 0.3});
  }
  const std::vector<UwbNode> nodes = {{1, {1.0, 1.0}}, {2, {19.0, 1.0}}, {3, {19.0, 19.0}}, {4, {1.0, 19.0}}};
  w.uwb_nodes.assign(nodes.begin(), nodes.begin() + num_nodes);

  TrajectorySpec& t = s.trajectory;
  t.waypoints = {{10.0, 2.0}, {10.0, 18.0}, {16.5, 18.0}, {16.5, 2.0},
                 {10.0, 2.0}, {10.0, 18.0}, {3.5, 18.0},  {3.5, 2.0}};
  t.start_heading = std::numbers::pi / 2.0;
  t.speed = 0.2;
  t.turn_rate = 0.5;
  t.duration = duration;
  return s;
}

std::vector<ColumnPair> column_pairs(const std::vector<Column>& columns) {
  static const int kPairs[10][2] = {{1, 2}, {3, 4}, {5, 6}, {7, 8}, {1, 3}, {3, 5}, {5, 7}, {2, 4}, {4, 6}, {6, 8}};
  auto find = [&](int label) -> const Column* {
    for (const auto& c : columns) {
      if (c.label == label) return &c;
    }
    return nullptr;
  };
  std::vector<ColumnPair> out;
  for (const auto& p : kPairs) {
    const Column* a = find(p[0]);
    const Column* b = find(p[1]);
    if (a == nullptr || b == nullptr) {
      continue;
    }
    out.push_back({fmt::format("L{}{}", p[0], p[1]), p[0], p[1], (a->center - b->center).norm()});
  }
  return out;
}

void write_ground_truth(std::ostream& os, const GroundTruth& truth) {
  // hand-formatted so the bytes are stable and diffable
  os << "{\n  \"nodes\": [";
  for (std::size_t k = 0; k < truth.nodes.size(); ++k) {
    const auto& n = truth.nodes[k];
    os << (k ? ", " : "") << fmt::format(R"({{"id": {}, "x": {:.9f}, "y": {:.9f}}})", n.id, n.position.x(),
                                         n.position.y());
  }
  os << "],\n  \"columns\": [";
  for (std::size_t k = 0; k < truth.columns.size(); ++k) {
    const auto& c = truth.columns[k];
    os << (k ? ", " : "")
       << fmt::format(R"({{"label": {}, "x": {:.9f}, "y": {:.9f}, "radius": {:.9f}}})", c.label, c.center.x(),
                      c.center.y(), c.radius);
  }
  os << "],\n  \"column_pairs\": [";
  for (std::size_t k = 0; k < truth.column_pairs.size(); ++k) {
    const auto& p = truth.column_pairs[k];
    os << (k ? ", " : "")
       << fmt::format(R"({{"pair": "{}", "a": {}, "b": {}, "distance": {:.9f}}})", p.label, p.a, p.b, p.distance);
  }
  os << "],\n  \"trajectory\": [\n";
  for (std::size_t k = 0; k < truth.trajectory.size(); ++k) {
    const auto& s = truth.trajectory[k];
    os << fmt::format("    [{:.6f}, {:.9f}, {:.9f}, {:.9f}]", s.stamp, s.pose.x(), s.pose.y(), s.pose.theta())
       << (k + 1 < truth.trajectory.size() ? ",\n" : "\n");
  }
  os << "  ]\n}\n";
}

GroundTruth read_ground_truth(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SimulationError(fmt::format("ground truth is not valid JSON: {}", e.what()));
  }
  GroundTruth t;
  try {
    for (const auto& n : j.at("nodes")) {
      t.nodes.push_back({n.at("id").get<int>(), {n.at("x").get<double>(), n.at("y").get<double>()}});
    }
    for (const auto& c : j.at("columns")) {
      t.columns.push_back({c.at("label").get<int>(),
                           {c.at("x").get<double>(), c.at("y").get<double>()},
                           c.at("radius").get<double>()});
    }
    for (const auto& p : j.at("column_pairs")) {
      t.column_pairs.push_back(
          {p.at("pair").get<std::string>(), p.at("a").get<int>(), p.at("b").get<int>(), p.at("distance").get<double>()});
    }
    for (const auto& s : j.at("trajectory")) {
      t.trajectory.push_back({s.at(0).get<double>(), Pose2(s.at(1).get<double>(), s.at(2).get<double>(),
                                                           s.at(3).get<double>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SimulationError(fmt::format("ground truth is malformed: {}", e.what()));
  }
  return t;
}

}  // namespace uwbslam
