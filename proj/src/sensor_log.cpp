#include "uwbslam/sensor_log.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <json.hpp>
#include <ostream>
#include <sstream>

namespace uwbslam {
namespace {

using json = nlohmann::json;

std::int64_t micros(double stamp) { return std::llround(stamp * 1e6); }

// Rounded text must stay inside (-pi, pi] or the reader would re-wrap it.
std::string heading_text(double theta) {
  std::string s = fmt::format("{:.9f}", theta);
  const double parsed = std::stod(s);
  if (parsed > std::numbers::pi) {
    s = fmt::format("{:.9f}", theta - 1e-9);
  } else if (parsed <= -std::numbers::pi) {
    s = fmt::format("{:.9f}", theta + 1e-9);
  }
  return s;
}

std::string odom_line(const OdomRecord& r) {
  return fmt::format(R"({{"stamp":{:.6f},"kind":"odom","x":{:.9f},"y":{:.9f},"theta":{}}})", r.stamp, r.pose.x(),
                     r.pose.y(), heading_text(r.pose.theta()));
}

std::string scan_line(const Scan& s) {
  std::string out = fmt::format(
      R"({{"stamp":{:.6f},"kind":"scan","angle_min":{:.9f},"angle_increment":{:.9f},"range_max":{:.6f},"ranges":[)",
      s.stamp, s.angle_min, s.angle_increment, s.range_max);
  for (std::size_t k = 0; k < s.ranges.size(); ++k) {
    if (k > 0) out.push_back(',');
    if (std::isfinite(s.ranges[k])) {
      out += fmt::format("{:.6f}", s.ranges[k]);
    } else {
      out += "null";
    }
  }
  out += "]}";
  return out;
}

std::string uwb_line(const UwbRecord& r) {
  return fmt::format(R"({{"stamp":{:.6f},"kind":"uwb","node_id":{},"distance":{:.6f}}})", r.stamp, r.node_id,
                     r.distance);
}

double number(const json& j, const char* key, int line) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw LogParseError(line, fmt::format("missing numeric field '{}'", key));
  }
  return it->get<double>();
}

}  // namespace

LogParseError::LogParseError(int line, const std::string& what)
    : std::runtime_error(fmt::format("line {}: {}", line, what)), line_(line) {}

void write_jsonl(std::ostream& os, const SensorLog& log) {
  struct Entry {
    std::int64_t t;
    int kind;
    int node;
    std::size_t idx;
  };
  std::vector<Entry> entries;
  entries.reserve(log.odometry.size() + log.scans.size() + log.uwb.size());
  for (std::size_t k = 0; k < log.odometry.size(); ++k) entries.push_back({micros(log.odometry[k].stamp), 0, 0, k});
  for (std::size_t k = 0; k < log.scans.size(); ++k) entries.push_back({micros(log.scans[k].stamp), 1, 0, k});
  for (std::size_t k = 0; k < log.uwb.size(); ++k)
    entries.push_back({micros(log.uwb[k].stamp), 2, log.uwb[k].node_id, k});
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.node < b.node;
  });
  for (const auto& e : entries) {
    switch (e.kind) {
      case 0:
        os << odom_line(log.odometry[e.idx]) << '\n';
        break;
      case 1:
        os << scan_line(log.scans[e.idx]) << '\n';
        break;
      default:
        os << uwb_line(log.uwb[e.idx]) << '\n';
        break;
    }
  }
}

SensorLog read_jsonl(std::istream& is) {
  SensorLog log;
  std::string line;
  int line_no = 0;
  double last_stamp = -std::numeric_limits<double>::infinity();
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw LogParseError(line_no, fmt::format("invalid JSON ({})", e.what()));
    }
    if (!j.is_object()) {
      throw LogParseError(line_no, "record is not a JSON object");
    }
    const double stamp = number(j, "stamp", line_no);
    if (!std::isfinite(stamp) || stamp < last_stamp) {
      throw LogParseError(line_no, "stamps must be finite and non-decreasing");
    }
    last_stamp = stamp;
    const auto kind_it = j.find("kind");
    if (kind_it == j.end() || !kind_it->is_string()) {
      throw LogParseError(line_no, "missing 'kind'");
    }
    const std::string kind = kind_it->get<std::string>();
    if (kind == "odom") {
      log.odometry.push_back(
          {stamp, Pose2(number(j, "x", line_no), number(j, "y", line_no), number(j, "theta", line_no))});
    } else if (kind == "scan") {
      Scan s;
      s.stamp = stamp;
      s.angle_min = number(j, "angle_min", line_no);
      s.angle_increment = number(j, "angle_increment", line_no);
      s.range_max = number(j, "range_max", line_no);
      const auto rit = j.find("ranges");
      if (rit == j.end() || !rit->is_array()) {
        throw LogParseError(line_no, "scan without 'ranges' array");
      }
      s.ranges.reserve(rit->size());
      for (const auto& r : *rit) {
        if (r.is_null()) {
          s.ranges.push_back(std::numeric_limits<double>::infinity());
        } else if (r.is_number()) {
          s.ranges.push_back(r.get<double>());
        } else {
          throw LogParseError(line_no, "scan range must be a number or null");
        }
      }
      log.scans.push_back(std::move(s));
    } else if (kind == "uwb") {
      const auto id = j.find("node_id");
      if (id == j.end() || !id->is_number_integer()) {
        throw LogParseError(line_no, "uwb record needs an integer 'node_id'");
      }
      log.uwb.push_back({stamp, id->get<int>(), number(j, "distance", line_no)});
    } else {
      throw LogParseError(line_no, fmt::format("unknown record kind '{}'", kind));
    }
  }
  return log;
}

SensorLog quantize(const SensorLog& log) {
  std::stringstream ss;
  write_jsonl(ss, log);
  return read_jsonl(ss);
}

}  // namespace uwbslam
