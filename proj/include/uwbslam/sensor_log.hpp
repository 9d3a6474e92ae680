#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "uwbslam/geometry.hpp"
#include "uwbslam/pointcloud.hpp"

namespace uwbslam {

/// Integrated wheel-odometry pose.
struct OdomRecord {
  double stamp = 0.0;
  Pose2 pose;
};

struct UwbRecord {
  double stamp = 0.0;
  int node_id = 0;
  double distance = 0.0;
};

/// Sensor streams of one run, each sorted by stamp.
struct SensorLog {
  std::vector<OdomRecord> odometry;
  std::vector<Scan> scans;
  std::vector<UwbRecord> uwb;
};

class LogParseError : public std::runtime_error {
 public:
  LogParseError(int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

/// One JSON object per line, merged in time order (odom, scan, uwb on equal stamps).
/// Stamps carry six decimals; invalid scan returns are written as null.
void write_jsonl(std::ostream& os, const SensorLog& log);
/// Throws LogParseError with the 1-based line number on malformed or unknown records.
SensorLog read_jsonl(std::istream& is);

/// Round-trips the log through its text form so in-memory runs see file precision.
SensorLog quantize(const SensorLog& log);

}  // namespace uwbslam
