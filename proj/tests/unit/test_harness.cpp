#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "batchopt/config.hpp"
#include "batchopt/harness.hpp"

using namespace batchopt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json header() {
  return {{"type", "header"},
          {"scenario", "synthetic"},
          {"kind", "cruise"},
          {"dt", 0.1},
          {"ellipse", {{"a", 5.6}, {"b", 3.1}}},
          {"vehicle", {{"length", 3.9}, {"width", 2.1}}},
          {"meta", {{"v_cruise", 15.0}, {"v_max", 22.0}, {"y_rl", 2.0}, {"w1", 1.0}, {"w2", 1.0}}}};
}

json cycle(int k, double x, double y, double v, double psidot, json vehicles = json::array()) {
  return {{"type", "cycle"},
          {"cycle", k},
          {"t", 0.1 * k},
          {"ego", {{"x", x}, {"y", y}, {"psi", 0.0}, {"psidot", psidot}, {"vx", v}, {"vy", 0.0}}},
          {"iterations", 10 + k},
          {"fallback", "none"},
          {"vehicles", vehicles}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("batchopt_test_" + name);
  fs::remove_all(p);
  return p;
}

ScenarioConfig short_cruise(double duration) {
  ScenarioConfig c = load_config(std::string(BATCHOPT_SCENARIOS) + "/cruise_idm.toml");
  c.duration = duration;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BATCHOPT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Summarize, ConstantVelocityHasNoAcceleration) {
  std::vector<json> log{header()};
  for (int k = 0; k < 20; ++k) log.push_back(cycle(k, 1.5 * k, 6.0, 15.0, 0.0));
  const MetricsSummary s = summarize(log, {});
  EXPECT_EQ(s.cycles, 20);
  EXPECT_EQ(s.linear_accel.max, 0.0);
  EXPECT_EQ(s.angular_accel.max, 0.0);
  EXPECT_EQ(s.meta_cost.max, 0.0);
  EXPECT_FALSE(s.solve_time.has_value());
  EXPECT_EQ(s.collisions, 0);
}

TEST(Summarize, HandComputed) {
  std::vector<json> log{header(), cycle(0, 0.0, 2.0, 14.0, 0.0), cycle(1, 1.4, 4.0, 15.0, 0.2),
                        cycle(2, 2.9, 6.0, 17.0, 0.1)};
  std::vector<json> timing{{{"solve_seconds", 0.1}, {"cycle_seconds", 0.2}},
                           {{"solve_seconds", 0.3}, {"cycle_seconds", 0.4}},
                           {{"solve_seconds", 0.2}, {"cycle_seconds", 0.3}}};
  const MetricsSummary s = summarize(log, timing);
  EXPECT_NEAR(s.velocity_residual.mean, (1.0 + 0.0 + 4.0) / 3.0, 1e-12);
  EXPECT_EQ(s.velocity_residual.min, 0.0);
  EXPECT_EQ(s.velocity_residual.max, 4.0);
  EXPECT_NEAR(s.velocity.mean, 46.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.lateral_distance.mean, 2.0, 1e-12);
  EXPECT_EQ(s.lateral_distance.max, 4.0);
  EXPECT_NEAR(s.linear_accel.mean, 15.0, 1e-9);  // |1| / 0.1 and |2| / 0.1
  EXPECT_NEAR(s.linear_accel.min, 10.0, 1e-9);
  EXPECT_NEAR(s.angular_accel.max, 2.0, 1e-9);
  EXPECT_NEAR(s.angular_accel.min, 1.0, 1e-9);
  ASSERT_TRUE(s.solve_time.has_value());
  EXPECT_NEAR(s.solve_time->mean, 0.2, 1e-12);
  EXPECT_EQ(s.solve_time->max, 0.3);
  EXPECT_EQ(s.iterations.max, 12.0);
}

TEST(Summarize, CountsCollisionsAndRatio) {
  json near = json::array({{{"id", 1}, {"x", 3.0}, {"y", 6.0}, {"vx", 10.0}, {"vy", 0.0}}});
  json far = json::array({{{"id", 1}, {"x", 11.2}, {"y", 6.0}, {"vx", 10.0}, {"vy", 0.0}}});
  std::vector<json> log{header(), cycle(0, 0.0, 6.0, 15.0, 0.0, far),
                        cycle(1, 0.0, 6.0, 15.0, 0.0, near)};
  const MetricsSummary s = summarize(log, {});
  EXPECT_EQ(s.collisions, 1);
  EXPECT_NEAR(s.min_ellipse_ratio, 3.0 / 5.6, 1e-12);
}

TEST(Summarize, Errors) {
  EXPECT_THROW(summarize({}, {}), RunError);
  EXPECT_THROW(summarize({header()}, {}), RunError);
  json bad = cycle(0, 0.0, 0.0, 0.0, 0.0);
  bad.erase("ego");
  EXPECT_THROW(summarize({header(), bad}, {}), RunError);
}

TEST(Footprints, Overlap) {
  EXPECT_TRUE(footprints_overlap(0, 0, 0, 3.8, 0, 0, 3.9, 2.1));
  EXPECT_FALSE(footprints_overlap(0, 0, 0, 4.0, 0, 0, 3.9, 2.1));
  EXPECT_FALSE(footprints_overlap(0, 0, 0, 0, 2.2, 0, 3.9, 2.1));
  EXPECT_TRUE(footprints_overlap(0, 0, 0, 0, 2.0, 0, 3.9, 2.1));
  // A corner turned into the gap: separated when aligned, touching at 45 degrees.
  EXPECT_FALSE(footprints_overlap(0, 0, 0, 3.0, 2.15, 0, 3.9, 2.1));
  EXPECT_TRUE(footprints_overlap(0, 0, 0, 3.0, 2.15, std::atan(1.0), 3.9, 2.1));
}

TEST(Run, DeterministicAndResummarizable) {
  const ScenarioConfig cfg = short_cruise(1.5);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  RunOptions oa{a.string(), true}, ob{b.string(), true};
  const RunResult ra = run_scenario(cfg, 7, oa);
  run_scenario(cfg, 7, ob);
  EXPECT_EQ(ra.cycles, 15);
  EXPECT_EQ(slurp(a / "run.jsonl"), slurp(b / "run.jsonl"));
  EXPECT_TRUE(fs::exists(a / "summary.json"));
  // The stored summary is a function of the logs alone.
  const json stored = json::parse(slurp(a / "summary.json"));
  EXPECT_EQ(to_json(summarize_file((a / "run.jsonl").string())), stored);
  const auto lines = read_jsonl((a / "run.jsonl").string());
  ASSERT_EQ(lines.size(), 16u);
  EXPECT_EQ(lines[1].at("candidates").size(), 11u);
  EXPECT_TRUE(lines[1].at("candidates")[0].contains("x"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, SeedChangesTraffic) {
  const ScenarioConfig cfg = short_cruise(0.1);
  const World w1 = build_world(cfg, 7), w2 = build_world(cfg, 8);
  ASSERT_EQ(w1.vehicles().size(), w2.vehicles().size());
  bool differs = false;
  for (std::size_t i = 0; i < w1.vehicles().size(); ++i)
    differs = differs || w1.vehicles()[i].state.x != w2.vehicles()[i].state.x;
  EXPECT_TRUE(differs);
}

TEST(Bench, TimingRows) {
  const ScenarioConfig cfg = canonical_dense_config();
  const auto rows = bench_batch(cfg, *cfg.seed, {4, 11}, 2, true);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].batch_size, 4);
  EXPECT_EQ(rows[1].mean_iterations, cfg.planner.solver.max_iter);
  EXPECT_EQ(rows[0].factorizations, 2);
  const fs::path p = scratch("timing.csv");
  write_timing_csv(p.string(), rows);
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 3);
  fs::remove(p);
}

TEST(Cli, ExitCodes) {
  const fs::path out = scratch("cli");
  const std::string scen = BATCHOPT_SCENARIOS;
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("run /nonexistent.toml"), 1);
  EXPECT_EQ(run_cli("oracle nosuch"), 1);
  EXPECT_EQ(run_cli("bench-batch --sizes 2 --cycles 1 --out " + out.string()), 1);
  fs::create_directories(out);
  {
    std::ofstream f(out / "bad.toml");
    f << "name = \"x\"\nkind = \"cruise\"\nduration = -1.0\nseed = 1\n";
  }
  EXPECT_EQ(run_cli("run " + (out / "bad.toml").string()), 1);
  {
    std::ofstream f(out / "noseed.toml");
    f << "name = \"x\"\nkind = \"cruise\"\nduration = 0.2\n";
  }
  EXPECT_EQ(run_cli("run " + (out / "noseed.toml").string() + " --out " + out.string()), 1);
  EXPECT_EQ(run_cli("run " + (out / "noseed.toml").string() + " --seed 3 --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "run.jsonl"));
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  EXPECT_EQ(run_cli("summarize " + (out / "run.jsonl").string()), 0);
  {
    std::ofstream f(out / "empty.jsonl");
  }
  EXPECT_EQ(run_cli("summarize " + (out / "empty.jsonl").string()), 2);
  EXPECT_EQ(run_cli("bench-batch --sizes 4,11 --cycles 1 --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "timing.csv"));
  EXPECT_EQ(run_cli("oracle basis"), 0);
  fs::remove_all(out);
}
