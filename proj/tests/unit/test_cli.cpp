#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "asmplan/config_io.hpp"
#include "cli.hpp"
#include "scenes.hpp"

namespace asmplan {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("asmplan_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const json& j) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  static json body_json() {
    return json::parse(R"({
      "mass": 1.0, "inertia": [0.16666666666666666, 0.16666666666666666, 0.16666666666666666],
      "gravity": [0, 0, -9.81, 0, 0, 0],
      "actuated": [{"box": [0.5, 0.5, 0.5]}],
      "environment": [{"box": [5, 5, 0.5], "position": [0, 0, -0.5]}],
      "pairs": "all"})");
  }
  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "asmplan");
    return cli::run(args);
  }

  fs::path dir_;
};

TEST_F(CliTest, SdfGridWritesOneFilePerTau) {
  const fs::path cfg = write("sdf.json", json::parse(R"({"polygon": {"square": 1.0},
      "grid": {"x_min": -2, "x_max": 2, "y_min": -2, "y_max": 2, "nx": 9, "ny": 9}, "tau": [0.01, 0.001]})"));
  ASSERT_EQ(run({"sdf-grid", "--config", cfg.string(), "--out", (dir_ / "a").string()}), 0);
  ASSERT_EQ(run({"sdf-grid", "--config", cfg.string(), "--out", (dir_ / "b").string()}), 0);
  for (const char* f : {"sdf_0_tau_0.01.csv", "sdf_1_tau_0.001.csv"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f));
  }
}

TEST_F(CliTest, SimulateDrop) {
  json j = json::parse(R"({"x0": {"position": [0, 0, 0.7], "orientation": [1, 0, 0, 0]},
                           "dt": 0.01, "N": 40, "sigma": 1e-4, "tau": 1e-3})");
  j["body"] = body_json();
  const fs::path cfg = write("sim.json", j);
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", dir_.string()}), 0);
  const std::string csv = slurp(dir_ / "rollout.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 42);  // header and N + 1 states
}

TEST_F(CliTest, SolveShortSlide) {
  json j = ocp_config_to_json(testing::short_slide(2));
  j["body"] = body_json();
  const fs::path cfg = write("slide.json", j);
  ASSERT_EQ(run({"solve", "--config", cfg.string(), "--out", (dir_ / "a").string()}), 0);
  ASSERT_EQ(run({"solve", "--config", cfg.string(), "--out", (dir_ / "b").string(), "--threads", "1"}), 0);
  for (const char* f : {"report.json", "reference.csv", "scenario_0.csv", "scenario_1.csv", "forces.csv"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  const json rep = json::parse(slurp(dir_ / "a" / "report.json"));
  EXPECT_TRUE(rep.at("completed").get<bool>());
  EXPECT_TRUE(fs::exists(dir_ / "a" / "timing.json"));

  // an exhausted budget is a non-convergence
  EXPECT_EQ(run({"solve", "--config", cfg.string(), "--out", (dir_ / "c").string(), "--iteration-budget", "2"}), 3);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({"solve", "--config", (dir_ / "missing.json").string()}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"--help"}), 0);
  EXPECT_EQ(run({"sdf-grid"}), 2);  // --config is required

  json bad = json::parse(R"({"polygon": {"square": 1.0}, "grid": {"nx": 0, "ny": 3}, "tau": [0.01]})");
  EXPECT_EQ(run({"sdf-grid", "--config", write("bad.json", bad).string()}), 2);

  json j = ocp_config_to_json(testing::short_slide(2));
  j["body"] = body_json();
  const fs::path cfg = write("slide.json", j);
  EXPECT_EQ(run({"solve", "--config", cfg.string(), "--hessian", "newton"}), 2);

  json bench = json::parse(R"({"scenarios": ["slide.json"]})");
  EXPECT_EQ(run({"bench", "--config", write("bench.json", bench).string(), "--out", dir_.string()}), 2);
}

}  // namespace
}  // namespace asmplan
