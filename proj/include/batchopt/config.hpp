#pragma once

// Scenario configuration loaded from TOML.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "batchopt/planner.hpp"
#include "batchopt/traffic.hpp"

namespace batchopt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IdmVehicleSpec {
  int lane = 0;
  double x = 0.0;
  double v = 0.0;
  double v0 = 15.0;
};

struct TrafficConfig {
  enum class Source { Idm, Trace };
  Source source = Source::Idm;
  /// Resolved against the config file's directory.
  std::string trace_path;
  IdmParams idm;
  /// Vehicles listed explicitly in the config.
  std::vector<IdmVehicleSpec> vehicles;
  /// Seeded random fill: `per_lane` vehicles per lane starting at `x_start`
  /// with spacing drawn from [0.7, 1.3] * spacing and desired speed around
  /// `lane_v0[lane]` +- `v0_spread`.
  int per_lane = 0;
  double x_start = -80.0;
  double spacing = 40.0;
  std::vector<double> lane_v0;
  double v0_spread = 1.0;
  /// Random vehicles are not placed within this distance of the ego in its lane.
  double ego_clearance = 30.0;
  double ego_reach = 3.1;
};

struct EgoInit {
  double x = 0.0;
  int lane = 1;
  double v = 15.0;
};

struct ScenarioConfig {
  std::string name;
  double duration = 60.0;
  std::optional<std::uint64_t> seed;
  PlannerConfig planner;
  TrafficConfig traffic;
  EgoInit ego;
  double vehicle_length = 3.9;
  double vehicle_width = 2.1;
};

/// Parses and validates a scenario file. Throws ConfigError with the
/// offending key in the message.
ScenarioConfig load_config(const std::string& path);
ScenarioConfig parse_config(const std::string& toml_text, const std::string& base_dir);

const char* to_string(MetaKind k);
const char* to_string(WarmStart w);

}  // namespace batchopt
