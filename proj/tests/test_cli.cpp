// Drives the uwbslam executable end to end.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uwbslam/sensor_log.hpp"

namespace fs = std::filesystem;
using namespace uwbslam;

namespace {

const fs::path kCli = UWBSLAM_CLI;
const fs::path kFixtures = UWBSLAM_FIXTURES;
const fs::path kGolden = UWBSLAM_GOLDEN;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("uwbslam_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = kCli.string() + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = slurp(out);
    o.err = slurp(err);
    return o;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SimulateIsDeterministicAndHonoursFlags) {
  ASSERT_EQ(run("simulate --seed 7 --duration 20 --out " + (dir_ / "a").string()).code, 0);
  ASSERT_EQ(run("simulate --seed 7 --duration 20 --out " + (dir_ / "b").string()).code, 0);
  EXPECT_EQ(slurp(dir_ / "a/log.jsonl"), slurp(dir_ / "b/log.jsonl"));
  EXPECT_EQ(slurp(dir_ / "a/ground_truth.json"), slurp(dir_ / "b/ground_truth.json"));
  std::ifstream is(dir_ / "a/log.jsonl");
  const SensorLog log = read_jsonl(is);
  EXPECT_EQ(log.odometry.back().stamp, 20.0);

  const Outcome o = run("simulate --seed 7 --duration 20 --nodes 2 --out " + (dir_ / "c").string());
  ASSERT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("2 nodes"), std::string::npos) << o.out;
  std::ifstream ic(dir_ / "c/log.jsonl");
  for (const auto& r : read_jsonl(ic).uwb) EXPECT_TRUE(r.node_id == 1 || r.node_id == 2);
}

TEST_F(Cli, SimulateRejectsBadArguments) {
  Outcome o = run("simulate --scenario warehouse --out " + (dir_ / "x").string());
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.err.find("unknown scenario"), std::string::npos);
  EXPECT_NE(run("simulate --nodes 5 --out " + (dir_ / "x").string()).code, 0);
  EXPECT_NE(run("simulate --seed 1").code, 0);
  EXPECT_NE(run("simulate --out /proc/forbidden/dir").code, 0);
}

TEST_F(Cli, SlamWritesEveryOutputDeterministically) {
  ASSERT_EQ(run("simulate --seed 3 --duration 60 --out " + dir_.string()).code, 0);
  const std::string log = (dir_ / "log.jsonl").string();
  ASSERT_EQ(run("slam --log " + log + " --out " + (dir_ / "r1").string()).code, 0);
  ASSERT_EQ(run("slam --log " + log + " --out " + (dir_ / "r2").string()).code, 0);
  for (const char* f : {"trajectory.txt", "landmarks.txt", "map.pgm", "map.meta", "report.csv",
                        "stage1_optimizer.csv", "loops.csv"}) {
    ASSERT_TRUE(fs::exists(dir_ / "r1" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "r1" / f), slurp(dir_ / "r2" / f)) << f;
  }
  for (const auto& entry : fs::directory_iterator(dir_ / "r1")) {
    EXPECT_NE(entry.path().extension(), ".tmp");
  }
}

TEST_F(Cli, SlamFlagsSelectVariants) {
  ASSERT_EQ(run("simulate --seed 3 --duration 60 --out " + dir_.string()).code, 0);
  const std::string log = (dir_ / "log.jsonl").string();
  ASSERT_EQ(run("slam --log " + log + " --stage1-only --out " + (dir_ / "s1").string()).code, 0);
  EXPECT_FALSE(fs::exists(dir_ / "s1/loops.csv"));
  ASSERT_EQ(run("slam --log " + log + " --no-uwb --no-loops --out " + (dir_ / "dr").string()).code, 0);
  EXPECT_EQ(slurp(dir_ / "dr/landmarks.txt"), "");
  ASSERT_EQ(run("slam --log " + log + " --nodes 2,4 --epsilon 0 --sigma 0.05 --icp-d 0.2 --icp-iters 50 --out " +
                (dir_ / "n").string())
                .code,
            0);
  const std::string lm = slurp(dir_ / "n/landmarks.txt");
  EXPECT_EQ(lm.substr(0, 2), "2 ");
  EXPECT_NE(lm.find("\n4 "), std::string::npos);
  std::ofstream(dir_ / "c.json") << R"({"epsilon": 4.0, "sigma": 0.08})";
  EXPECT_EQ(run("slam --log " + log + " --config " + (dir_ / "c.json").string() + " --out " + (dir_ / "c").string())
                .code,
            0);
  std::ofstream(dir_ / "bad.json") << R"({"epsilonn": 4.0})";
  const Outcome o = run("slam --log " + log + " --config " + (dir_ / "bad.json").string() + " --out " +
                        (dir_ / "b").string());
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.err.find("epsilonn"), std::string::npos) << o.err;
  EXPECT_NE(run("slam --log " + log + " --sigma -1 --out " + (dir_ / "b").string()).code, 0);
  EXPECT_NE(run("slam --log " + log + " --nodes 1,x --out " + (dir_ / "b").string()).code, 0);
}

TEST_F(Cli, MalformedLogReportsLineNumber) {
  std::ofstream(dir_ / "bad.jsonl") << R"({"stamp":0.0,"kind":"odom","x":0,"y":0,"theta":0})" "\n"
                                    << R"({"stamp":0.1,"kind":"odom","x":0,"y":0,"theta":0})" "\n"
                                    << R"({"stamp":0.2,"kind":"imu"})" "\n";
  const Outcome o = run("slam --log " + (dir_ / "bad.jsonl").string() + " --out " + (dir_ / "r").string());
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.err.find("line 3"), std::string::npos) << o.err;
  EXPECT_NE(run("slam --log " + (dir_ / "missing.jsonl").string() + " --out " + (dir_ / "r").string()).code, 0);
}

TEST_F(Cli, EvaluatePerfectInputScoresZero) {
  const fs::path perfect = kFixtures / "perfect";
  const Outcome o = run("evaluate --run " + perfect.string() + " --truth " + (perfect / "ground_truth.json").string() +
                        " --out " + (dir_ / "eval.csv").string());
  ASSERT_EQ(o.code, 0) << o.err;
  const std::string expected = slurp(perfect / "expected_evaluation.csv");
  EXPECT_EQ(slurp(dir_ / "eval.csv"), expected);
  EXPECT_NE(o.out.find("mean,,,0.000000"), std::string::npos);
  EXPECT_NE(run("evaluate --run " + (dir_ / "nothing").string() + " --truth " +
                (perfect / "ground_truth.json").string())
                .code,
            0);
  EXPECT_NE(run("evaluate --truth " + (perfect / "ground_truth.json").string()).code, 0);
}

TEST_F(Cli, SweepWritesOneRowPerValue) {
  ASSERT_EQ(run("simulate --seed 2 --duration 480 --out " + dir_.string()).code, 0);
  const std::string common =
      "evaluate --log " + (dir_ / "log.jsonl").string() + " --truth " + (dir_ / "ground_truth.json").string();
  const Outcome o = run(common + " --sweep epsilon=6,9 --out " + (dir_ / "eps.csv").string());
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream rows(slurp(dir_ / "eps.csv"));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(rows, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0].rfind("param,value,mean_error,ate,loop_candidates,loops_accepted,L12,", 0), 0u);
  EXPECT_EQ(lines[1].rfind("epsilon,6,", 0), 0u);
  EXPECT_EQ(lines[2].rfind("epsilon,9,", 0), 0u);
  const Outcome n = run(common + " --sweep nodes=1+2,3 --out " + (dir_ / "nodes.csv").string());
  ASSERT_EQ(n.code, 0) << n.err;
  EXPECT_NE(slurp(dir_ / "nodes.csv").find("\nnodes,1+2,"), std::string::npos);
  EXPECT_NE(run(common + " --sweep colour=1,2").code, 0);
  EXPECT_NE(run(common + " --sweep epsilon=abc").code, 0);
}

// The reference run: seed 7, full scenario, default flags.
TEST_F(Cli, GoldenReferenceRun) {
  ASSERT_EQ(run("simulate --seed 7 --out " + dir_.string()).code, 0);
  ASSERT_EQ(run("slam --log " + (dir_ / "log.jsonl").string() + " --out " + (dir_ / "run").string()).code, 0);
  for (const auto& entry : fs::directory_iterator(kGolden)) {
    const fs::path mine = dir_ / "run" / entry.path().filename();
    ASSERT_TRUE(fs::exists(mine)) << mine;
    EXPECT_TRUE(slurp(mine) == slurp(entry.path())) << entry.path().filename() << " differs from the golden copy";
  }
}
