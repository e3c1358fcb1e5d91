#pragma once

// Closed-loop scenario runner, log format and metrics.
//
// A run directory holds
//   run.jsonl     header line, then one record per MPC cycle; deterministic
//                 given (config, seed)
//   timing.jsonl  wall-clock solve and cycle times, one line per cycle
//   summary.json  summarize(run.jsonl, timing.jsonl)

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "batchopt/config.hpp"
#include "batchopt/planner.hpp"
#include "batchopt/traffic.hpp"

namespace batchopt {

/// Runtime failure inside a run (solver blow-up, IO). The partial log is
/// flushed before it propagates.
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense 4-lane scene: ten IDM vehicles around the ego, default planner
/// settings (l = 11, n = 100, m = 10).
ScenarioConfig canonical_dense_config();

/// Traffic at t = 0 for the config; random placement uses `seed`.
World build_world(const ScenarioConfig& cfg, std::uint64_t seed);
EgoState initial_ego(const ScenarioConfig& cfg);

struct RunOptions {
  std::string out_dir;
  bool emit_candidates = false;
};

struct Stat {
  double mean = 0.0, min = 0.0, max = 0.0;
  long count = 0;

  static Stat of(const std::vector<double>& xs);
};

struct MetricsSummary {
  std::string scenario;
  std::string kind;
  long cycles = 0;
  double duration = 0.0;
  /// Instantaneous meta-cost of the executed ego state, per cycle.
  Stat meta_cost;
  /// (v - v_cruise)^2 per cycle.
  Stat velocity_residual;
  /// |dv/dt| and |d psidot/dt| from consecutive ego records.
  Stat linear_accel;
  Stat angular_accel;
  Stat velocity;
  /// |y - y_rl|.
  Stat lateral_distance;
  std::optional<Stat> solve_time;
  std::optional<Stat> cycle_time;
  Stat iterations;
  /// Logged (cycle, vehicle) pairs whose footprints overlap.
  long collisions = 0;
  /// Smallest sqrt((dx/a)^2 + (dy/b)^2) between the ego and any logged vehicle.
  double min_ellipse_ratio = 0.0;
  long relaxed_cycles = 0;
  long emergency_cycles = 0;
  bool complete = true;
};

nlohmann::json to_json(const MetricsSummary& s);

/// Rectangle overlap test (separating axes) for two length x width
/// footprints centered at (x, y) with the given headings.
bool footprints_overlap(double x1, double y1, double h1, double x2, double y2, double h2,
                        double length, double width);

/// Pure function of the log lines. `timing` may be empty. Throws RunError on
/// an empty or malformed log.
MetricsSummary summarize(const std::vector<nlohmann::json>& log,
                         const std::vector<nlohmann::json>& timing);
/// Reads run.jsonl and, if present next to it, timing.jsonl.
MetricsSummary summarize_file(const std::string& run_jsonl);

std::vector<nlohmann::json> read_jsonl(const std::string& path);

struct RunResult {
  MetricsSummary summary;
  long cycles = 0;
};

/// Steps traffic and planner in lockstep for cfg.duration and writes the run
/// directory. Throws RunError after flushing when the run aborts.
RunResult run_scenario(const ScenarioConfig& cfg, std::uint64_t seed, const RunOptions& opts);

struct BatchTiming {
  int batch_size = 0;
  double mean = 0.0, min = 0.0, max = 0.0;
  double mean_iterations = 0.0;
  int cycles = 0;
  /// KKT factorizations performed while running this size.
  long factorizations = 0;
};

/// Closed-loop run of `cycles` cycles per batch size from the config's
/// initial scene. With `fixed_iterations` early stopping is disabled so
/// every solve runs max_iter iterations.
std::vector<BatchTiming> bench_batch(const ScenarioConfig& cfg, std::uint64_t seed,
                                     const std::vector<int>& sizes, int cycles,
                                     bool fixed_iterations);
void write_timing_csv(const std::string& path, const std::vector<BatchTiming>& rows);

}  // namespace batchopt
