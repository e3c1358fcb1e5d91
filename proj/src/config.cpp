#include "batchopt/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace batchopt {

namespace {

// Table wrapper that remembers which keys were read so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const toml::table* t, std::string path) : t_(t), path_(std::move(path)) {}

  bool present() const { return t_ != nullptr; }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  const toml::node* node(const std::string& k) {
    seen_.insert(k);
    return t_ ? t_->get(k) : nullptr;
  }

  void num(const std::string& k, double& out) {
    const toml::node* n = node(k);
    if (!n) return;
    if (auto v = n->value_exact<double>()) {
      out = *v;
    } else if (auto i = n->value_exact<int64_t>()) {
      out = static_cast<double>(*i);
    } else {
      throw ConfigError(key(k) + ": expected a number");
    }
    if (!std::isfinite(out)) throw ConfigError(key(k) + ": must be finite");
  }

  void integer(const std::string& k, int& out) {
    const toml::node* n = node(k);
    if (!n) return;
    auto i = n->value_exact<int64_t>();
    if (!i) throw ConfigError(key(k) + ": expected an integer");
    if (*i < -(1LL << 30) || *i > (1LL << 30)) throw ConfigError(key(k) + ": out of range");
    out = static_cast<int>(*i);
  }

  void boolean(const std::string& k, bool& out) {
    const toml::node* n = node(k);
    if (!n) return;
    auto b = n->value_exact<bool>();
    if (!b) throw ConfigError(key(k) + ": expected a boolean");
    out = *b;
  }

  bool str(const std::string& k, std::string& out) {
    const toml::node* n = node(k);
    if (!n) return false;
    auto s = n->value_exact<std::string>();
    if (!s) throw ConfigError(key(k) + ": expected a string");
    out = *s;
    return true;
  }

  Section sub(const std::string& k) {
    const toml::node* n = node(k);
    if (!n) return Section(nullptr, key(k));
    if (!n->is_table()) throw ConfigError(key(k) + ": expected a table");
    return Section(n->as_table(), key(k));
  }

  const toml::array* array(const std::string& k) {
    const toml::node* n = node(k);
    if (!n) return nullptr;
    if (!n->is_array()) throw ConfigError(key(k) + ": expected an array");
    return n->as_array();
  }

  void finish() const {
    if (!t_) return;
    for (const auto& [k, v] : *t_) {
      const std::string name(k.str());
      if (!seen_.count(name)) throw ConfigError(key(name) + ": unknown key");
    }
  }

 private:
  const toml::table* t_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

template <class E>
E pick(const std::string& key, const std::string& value,
       std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [n, e] : options) {
    if (value == n) return e;
    names += names.empty() ? n : std::string(", ") + n;
  }
  throw ConfigError(key + ": '" + value + "' is not one of " + names);
}

}  // namespace

const char* to_string(MetaKind k) {
  return k == MetaKind::Cruise ? "cruise" : "highspeed";
}

const char* to_string(WarmStart w) {
  switch (w) {
    case WarmStart::None: return "none";
    case WarmStart::Best: return "best";
    case WarmStart::All: return "all";
  }
  return "?";
}

ScenarioConfig parse_config(const std::string& toml_text, const std::string& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }

  ScenarioConfig cfg;
  PlannerConfig& pc = cfg.planner;
  Section top(&root, "");

  top.str("name", cfg.name);
  std::string kind = "cruise";
  top.str("kind", kind);
  pc.meta.kind = pick<MetaKind>("kind", kind,
                                {{"cruise", MetaKind::Cruise},
                                 {"highspeed", MetaKind::HighSpeedRightLane}});
  top.num("duration", cfg.duration);
  require(cfg.duration > 0.0, "duration: must be positive");
  if (const toml::node* n = top.node("seed")) {
    auto i = n->value_exact<int64_t>();
    if (!i || *i < 0) throw ConfigError("seed: expected a non-negative integer");
    cfg.seed = static_cast<std::uint64_t>(*i);
  }

  {
    Section s = top.sub("road");
    s.integer("lanes", pc.lanes.num_lanes);
    s.num("lane_width", pc.lanes.width);
    s.finish();
    require(pc.lanes.num_lanes >= 1 && pc.lanes.num_lanes <= 16, "road.lanes: must be in [1, 16]");
    require(pc.lanes.width > 0.0, "road.lane_width: must be positive");
  }

  {
    Section s = top.sub("ego");
    s.num("x", cfg.ego.x);
    s.integer("lane", cfg.ego.lane);
    s.num("v", cfg.ego.v);
    s.finish();
    require(cfg.ego.lane >= 0 && cfg.ego.lane < pc.lanes.num_lanes, "ego.lane: outside the road");
  }

  {
    Section s = top.sub("solver");
    s.integer("batch_size", pc.batch_size);
    s.integer("num_samples", pc.num_samples);
    s.num("horizon", pc.horizon);
    s.integer("degree", pc.degree);
    s.integer("num_obstacles", pc.num_obstacles);
    s.num("rho_xy", pc.rho_xy);
    s.integer("max_iter", pc.solver.max_iter);
    s.num("tol", pc.solver.tol);
    std::string backend = "openmp";
    s.str("backend", backend);
    pc.solver.backend = pick<kernels::Backend>(
        "solver.backend", backend,
        {{"serial", kernels::Backend::Serial}, {"openmp", kernels::Backend::OpenMP}});
    s.finish();
    require(pc.batch_size >= 1 && pc.batch_size <= 1024, "solver.batch_size: must be in [1, 1024]");
    require(pc.degree >= 6 && pc.degree <= 20, "solver.degree: must be in [6, 20]");
    require(pc.num_samples > pc.degree && pc.num_samples <= 2000,
            "solver.num_samples: must exceed degree and be at most 2000");
    require(pc.horizon > 0.0, "solver.horizon: must be positive");
    require(pc.num_obstacles >= 1 && pc.num_obstacles <= 64,
            "solver.num_obstacles: must be in [1, 64]");
    require(pc.rho_xy > 0.0, "solver.rho_xy: must be positive");
    require(pc.solver.max_iter >= 1, "solver.max_iter: must be at least 1");
    require(pc.solver.tol > 0.0, "solver.tol: must be positive");
  }

  {
    Section s = top.sub("meta");
    s.num("v_cruise", pc.meta.v_cruise);
    s.num("v_max", pc.meta.v_max);
    s.num("y_rl", pc.meta.y_rl);
    s.num("w1", pc.meta.w1);
    s.num("w2", pc.meta.w2);
    s.finish();
    require(pc.meta.v_cruise > 0.0, "meta.v_cruise: must be positive");
    require(pc.meta.v_max > 0.0, "meta.v_max: must be positive");
    require(pc.meta.w1 >= 0.0 && pc.meta.w2 >= 0.0, "meta.w1, meta.w2: must be non-negative");
  }

  {
    Section s = top.sub("vehicle");
    s.num("a", pc.a);
    s.num("b", pc.b);
    s.num("v_min", pc.v_min);
    s.num("v_max", pc.v_max);
    s.num("a_max", pc.a_max);
    s.num("wheelbase", pc.wheelbase);
    s.num("length", cfg.vehicle_length);
    s.num("width", cfg.vehicle_width);
    s.finish();
    require(pc.a > 0.0 && pc.b > 0.0, "vehicle.a, vehicle.b: must be positive");
    require(pc.v_min >= 0.0 && pc.v_min < pc.v_max, "vehicle.v_min: must be in [0, v_max)");
    require(pc.a_max > 0.0, "vehicle.a_max: must be positive");
    require(pc.wheelbase > 0.0, "vehicle.wheelbase: must be positive");
    require(cfg.vehicle_length > 0.0 && cfg.vehicle_width > 0.0,
            "vehicle.length, vehicle.width: must be positive");
  }
  pc.limits.y_lo = 0.5 * cfg.vehicle_width;
  pc.limits.y_hi = pc.lanes.num_lanes * pc.lanes.width - 0.5 * cfg.vehicle_width;

  {
    Section s = top.sub("filter");
    double heading_deg = pc.limits.heading_limit * 180.0 / std::numbers::pi;
    s.num("heading_limit_deg", heading_deg);
    pc.limits.heading_limit = heading_deg * std::numbers::pi / 180.0;
    s.num("residual_tol", pc.limits.residual_tol);
    s.num("relaxed_residual_tol", pc.limits.relaxed_residual_tol);
    s.num("collision_margin", pc.limits.collision_margin);
    bool road = true;
    s.boolean("road_bounds", road);
    if (!road) pc.limits.y_lo = pc.limits.y_hi = 0.0;
    s.finish();
    require(heading_deg > 0.0 && heading_deg <= 90.0, "filter.heading_limit_deg: must be in (0, 90]");
    require(pc.limits.residual_tol > 0.0, "filter.residual_tol: must be positive");
    require(pc.limits.relaxed_residual_tol >= pc.limits.residual_tol,
            "filter.relaxed_residual_tol: must be at least residual_tol");
    require(pc.limits.collision_margin >= 0.0, "filter.collision_margin: must be non-negative");
  }

  {
    Section s = top.sub("planner");
    s.num("cycle_dt", pc.cycle_dt);
    std::string warm = "all";
    s.str("warm_start", warm);
    pc.warm_start = pick<WarmStart>(
        "planner.warm_start", warm,
        {{"none", WarmStart::None}, {"best", WarmStart::Best}, {"all", WarmStart::All}});
    s.boolean("reset_multipliers", pc.reset_multipliers);
    s.num("warm_residual_tol", pc.warm_residual_tol);
    s.num("warm_multiplier_decay", pc.warm_multiplier_decay);
    s.boolean("traffic_aware_goals", pc.traffic_aware_goals);
    std::string fb = "follow";
    s.str("fallback", fb);
    pc.fallback = pick<FallbackMode>("planner.fallback", fb,
                                     {{"brake", FallbackMode::Brake}, {"follow", FallbackMode::Follow}});
    s.finish();
    require(pc.cycle_dt > 0.0 && pc.cycle_dt < pc.horizon, "planner.cycle_dt: must be in (0, horizon)");
    require(pc.warm_residual_tol > 0.0, "planner.warm_residual_tol: must be positive");
    require(pc.warm_multiplier_decay >= 0.0 && pc.warm_multiplier_decay <= 1.0,
            "planner.warm_multiplier_decay: must be in [0, 1]");
  }
  pc.solver.reset_multipliers_on_warm_start = pc.reset_multipliers;

  {
    Section s = top.sub("traffic");
    TrafficConfig& tc = cfg.traffic;
    std::string source = "idm";
    s.str("source", source);
    tc.source = pick<TrafficConfig::Source>(
        "traffic.source", source,
        {{"idm", TrafficConfig::Source::Idm}, {"trace", TrafficConfig::Source::Trace}});
    std::string trace;
    if (s.str("trace", trace)) {
      std::filesystem::path p(trace);
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      tc.trace_path = p.lexically_normal().string();
    }
    if (tc.source == TrafficConfig::Source::Trace)
      require(!tc.trace_path.empty(), "traffic.trace: required when source = \"trace\"");

    s.integer("per_lane", tc.per_lane);
    s.num("x_start", tc.x_start);
    s.num("spacing", tc.spacing);
    s.num("v0_spread", tc.v0_spread);
    s.num("ego_clearance", tc.ego_clearance);
    s.num("ego_reach", tc.ego_reach);
    if (const toml::array* a = s.array("lane_v0")) {
      for (std::size_t i = 0; i < a->size(); ++i) {
        const toml::node& n = *a->get(i);
        double v;
        if (auto d = n.value_exact<double>()) v = *d;
        else if (auto k = n.value_exact<int64_t>()) v = static_cast<double>(*k);
        else throw ConfigError("traffic.lane_v0[" + std::to_string(i) + "]: expected a number");
        require(v > 0.0, "traffic.lane_v0: speeds must be positive");
        tc.lane_v0.push_back(v);
      }
    }
    require(tc.per_lane >= 0, "traffic.per_lane: must be non-negative");
    require(tc.spacing > 0.0, "traffic.spacing: must be positive");
    require(tc.v0_spread >= 0.0, "traffic.v0_spread: must be non-negative");
    require(tc.ego_clearance >= 0.0, "traffic.ego_clearance: must be non-negative");
    require(tc.ego_reach >= 0.0, "traffic.ego_reach: must be non-negative");
    if (tc.per_lane > 0)
      require(!tc.lane_v0.empty(), "traffic.lane_v0: required when per_lane > 0");

    {
      Section d = s.sub("idm");
      d.num("T", tc.idm.T);
      d.num("s0", tc.idm.s0);
      d.num("a_idm", tc.idm.a_idm);
      d.num("b_idm", tc.idm.b_idm);
      d.num("length", tc.idm.length);
      d.num("hard_decel", tc.idm.hard_decel);
      d.finish();
      require(tc.idm.T > 0.0 && tc.idm.s0 > 0.0 && tc.idm.a_idm > 0.0 && tc.idm.b_idm > 0.0,
              "traffic.idm: T, s0, a_idm, b_idm must be positive");
      require(tc.idm.length >= 0.0, "traffic.idm.length: must be non-negative");
      require(tc.idm.hard_decel >= tc.idm.b_idm, "traffic.idm.hard_decel: must be at least b_idm");
    }

    if (const toml::node* n = s.node("vehicle")) {
      const toml::array* a = n->as_array();
      if (!a || !a->is_array_of_tables())
        throw ConfigError("traffic.vehicle: expected an array of tables ([[traffic.vehicle]])");
      for (std::size_t i = 0; i < a->size(); ++i) {
        Section v(a->get(i)->as_table(), "traffic.vehicle[" + std::to_string(i) + "]");
        IdmVehicleSpec spec;
        v.integer("lane", spec.lane);
        v.num("x", spec.x);
        v.num("v", spec.v);
        v.num("v0", spec.v0);
        v.finish();
        require(spec.lane >= 0 && spec.lane < pc.lanes.num_lanes,
                v.key("lane") + ": outside the road");
        require(spec.v >= 0.0, v.key("v") + ": must be non-negative");
        require(spec.v0 > 0.0, v.key("v0") + ": must be positive");
        tc.vehicles.push_back(spec);
      }
    }
    s.finish();
  }

  top.finish();
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path();
  ScenarioConfig cfg = parse_config(ss.str(), dir.string());
  if (cfg.name.empty()) cfg.name = std::filesystem::path(path).stem().string();
  return cfg;
}

}  // namespace batchopt
