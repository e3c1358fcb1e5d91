// batchopt command line: scenario runs, batch-size sweeps, oracle suites,
// log summaries and synthetic trace generation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "batchopt/config.hpp"
#include "batchopt/harness.hpp"
#include "batchopt/oracle.hpp"
#include "batchopt/traffic.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kRuntime = 2, kCheckFailed = 3 };

using namespace batchopt;

std::uint64_t resolve_seed(const ScenarioConfig& cfg, const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (cfg.seed) return *cfg.seed;
  throw ConfigError("no seed: set `seed` in the config or pass --seed");
}

int cmd_run(const std::string& config, const std::string& out,
            const std::optional<std::uint64_t>& seed, bool emit) {
  const ScenarioConfig cfg = load_config(config);
  const std::uint64_t s = resolve_seed(cfg, seed);
  RunOptions opts;
  opts.out_dir = out;
  opts.emit_candidates = emit;
  const RunResult r = run_scenario(cfg, s, opts);
  const MetricsSummary& m = r.summary;
  std::printf("%s: %ld cycles, collisions %ld, min ellipse ratio %.3f, velocity residual "
              "mean %.4f max %.4f, solve mean %.4f s\n",
              m.scenario.c_str(), r.cycles, m.collisions, m.min_ellipse_ratio,
              m.velocity_residual.mean, m.velocity_residual.max,
              m.solve_time ? m.solve_time->mean : 0.0);
  std::printf("wrote %s\n", (std::filesystem::path(out) / "run.jsonl").string().c_str());
  return kOk;
}

int cmd_bench(const std::string& config, const std::vector<int>& sizes, const std::string& out,
              const std::optional<std::uint64_t>& seed, int cycles, bool early_stop) {
  ScenarioConfig cfg = config.empty() ? canonical_dense_config() : load_config(config);
  const std::uint64_t s = resolve_seed(cfg, seed);
  for (int l : sizes)
    if (l < cfg.planner.lanes.num_lanes || l > 1024)
      throw ConfigError("--sizes: every size must be in [lanes, 1024]");
  const auto rows = bench_batch(cfg, s, sizes, cycles, !early_stop);
  std::filesystem::create_directories(out);
  const std::string path = (std::filesystem::path(out) / "timing.csv").string();
  write_timing_csv(path, rows);
  for (const auto& r : rows)
    std::printf("l = %4d  mean %.4f s  min %.4f s  max %.4f s  iterations %.1f  factorizations %ld\n",
                r.batch_size, r.mean, r.min, r.max, r.mean_iterations, r.factorizations);
  std::printf("wrote %s\n", path.c_str());
  return kOk;
}

int cmd_oracle(const std::string& suite) {
  bool ok = true;
  for (const auto& rep : oracle::run_suite(suite)) {
    for (const auto& c : rep.checks) {
      std::printf("[%s] %s/%s: %.3e (bound %.1e)%s%s\n", c.pass ? "PASS" : "FAIL",
                  rep.suite.c_str(), c.name.c_str(), c.value, c.bound,
                  c.detail.empty() ? "" : "  ", c.detail.c_str());
    }
    ok = ok && rep.pass();
  }
  return ok ? kOk : kCheckFailed;
}

int cmd_summarize(const std::string& log, const std::string& out) {
  const MetricsSummary m = summarize_file(log);
  const std::string text = to_json(m).dump(2);
  if (out.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream f(out);
    if (!f) throw RunError("cannot write " + out);
    f << text << "\n";
  }
  return kOk;
}

int cmd_gen_trace(const std::string& out, std::uint64_t seed, double duration, int per_lane,
                  double spacing, double brake_p, const std::vector<double>& lo,
                  const std::vector<double>& hi) {
  SyntheticTraceSpec spec;
  spec.seed = seed;
  spec.duration = duration;
  spec.vehicles_per_lane = per_lane;
  spec.mean_spacing = spacing;
  spec.brake_probability = brake_p;
  if (!lo.empty()) spec.lane_speed_lo = lo;
  if (!hi.empty()) spec.lane_speed_hi = hi;
  if (spec.lane_speed_lo.size() != spec.lane_speed_hi.size())
    throw ConfigError("--speed-lo and --speed-hi need the same number of entries");
  generate_synthetic_trace(spec).save_csv(out);
  std::printf("wrote %s\n", out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch non-holonomic trajectory optimization: scenario runner and checks"};
  app.require_subcommand(1);

  std::string config, out = ".", log, suite, summary_out;
  std::optional<std::uint64_t> seed;
  bool emit = false, early_stop = false;
  std::vector<int> sizes{4, 11, 22, 44};
  int cycles = 20;

  auto* run = app.add_subcommand("run", "Run a closed-loop scenario");
  run->add_option("config", config, "Scenario TOML")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory");
  run->add_option("--seed", seed, "Seed (overrides the config)");
  run->add_flag("--emit-candidates", emit, "Log every candidate trajectory");

  auto* bench = app.add_subcommand("bench-batch", "Solve time versus batch size");
  bench->add_option("config", config, "Scenario TOML (default: canonical dense scene)")
      ->check(CLI::ExistingFile);
  bench->add_option("--sizes", sizes, "Batch sizes")->delimiter(',');
  bench->add_option("--out", out, "Output directory for timing.csv");
  bench->add_option("--seed", seed, "Seed (overrides the config)");
  bench->add_option("--cycles", cycles, "MPC cycles per size")->check(CLI::PositiveNumber);
  bench->add_flag("--early-stop", early_stop,
                  "Keep the residual stopping rule (default: always max_iter iterations)");

  auto* orc = app.add_subcommand("oracle", "Run brute-force oracle comparisons");
  std::string names = "one of: all";
  for (const auto& n : oracle::suite_names()) names += ", " + n;
  orc->add_option("suite", suite, names)->required();

  auto* sum = app.add_subcommand("summarize", "Recompute summary.json from a run log");
  sum->add_option("log", log, "run.jsonl")->required()->check(CLI::ExistingFile);
  sum->add_option("--out", summary_out, "Write the summary here instead of stdout");

  auto* gen = app.add_subcommand("gen-trace", "Write a synthetic dense-traffic trace CSV");
  std::string trace_out;
  std::uint64_t trace_seed = 1;
  double duration = 75.0, spacing = 35.0, brake_p = 0.3;
  int per_lane = 6;
  std::vector<double> lo, hi;
  gen->add_option("--out", trace_out, "CSV path")->required();
  gen->add_option("--seed", trace_seed, "Seed")->required();
  gen->add_option("--duration", duration, "Seconds")->check(CLI::PositiveNumber);
  gen->add_option("--per-lane", per_lane, "Vehicles per lane")->check(CLI::NonNegativeNumber);
  gen->add_option("--spacing", spacing, "Mean initial spacing (m)")->check(CLI::PositiveNumber);
  gen->add_option("--brake-probability", brake_p, "Per-vehicle braking episode probability")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--speed-lo", lo, "Per-lane lower desired speed")->delimiter(',');
  gen->add_option("--speed-hi", hi, "Per-lane upper desired speed")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(config, out, seed, emit);
    if (*bench) return cmd_bench(config, sizes, out, seed, cycles, early_stop);
    if (*orc) return cmd_oracle(suite);
    if (*sum) return cmd_summarize(log, summary_out);
    if (*gen) return cmd_gen_trace(trace_out, trace_seed, duration, per_lane, spacing, brake_p, lo, hi);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kOk;
}
