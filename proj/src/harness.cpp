#include "batchopt/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

namespace batchopt {

using nlohmann::json;

namespace {

const char* fallback_name(Fallback f) {
  switch (f) {
    case Fallback::None: return "none";
    case Fallback::Relaxed: return "relaxed";
    case Fallback::Emergency: return "emergency";
  }
  return "?";
}

bool finite(const EgoState& e) {
  return std::isfinite(e.x) && std::isfinite(e.y) && std::isfinite(e.psi) &&
         std::isfinite(e.psidot) && std::isfinite(e.vx) && std::isfinite(e.vy) &&
         std::isfinite(e.ax) && std::isfinite(e.ay);
}

json ego_json(const EgoState& e) {
  return {{"x", e.x},   {"y", e.y},   {"psi", e.psi}, {"psidot", e.psidot},
          {"vx", e.vx}, {"vy", e.vy}, {"ax", e.ax},   {"ay", e.ay}};
}

json vehicle_json(const VehicleState& v) {
  return {{"id", v.id}, {"x", v.x}, {"y", v.y}, {"vx", v.vx}, {"vy", v.vy}, {"lane", v.lane}};
}

json vec_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

// Traffic and planner stepped together at the planner's cycle period.
class ClosedLoop {
 public:
  ClosedLoop(const ScenarioConfig& cfg, std::uint64_t seed, const PlannerConfig& pc)
      : world_(build_world(cfg, seed)), planner_(pc), ego_(initial_ego(cfg)), dt_(pc.cycle_dt) {}

  CycleResult step() {
    CycleResult r = planner_.cycle(ego_, world_.states());
    const EgoState next =
        r.executed_index ? planner_.advance_along(*planner_.last_state(), *r.executed_index, dt_)
                         : planner_.advance_command(ego_, r.command, dt_);
    if (!finite(next)) throw RunError("non-finite ego state at t = " + std::to_string(time()));
    world_.step(dt_, EgoPose{ego_.x, ego_.y, ego_.vx, ego_.vy});
    ego_ = next;
    ++cycles_;
    return r;
  }

  double time() const { return cycles_ * dt_; }
  const EgoState& ego() const { return ego_; }
  std::vector<VehicleState> vehicles() const { return world_.states(); }
  const Planner& planner() const { return planner_; }

 private:
  World world_;
  Planner planner_;
  EgoState ego_;
  double dt_;
  long cycles_ = 0;
};

json header_json(const ScenarioConfig& cfg, std::uint64_t seed) {
  const PlannerConfig& pc = cfg.planner;
  return {{"type", "header"},
          {"scenario", cfg.name},
          {"kind", to_string(pc.meta.kind)},
          {"seed", seed},
          {"duration", cfg.duration},
          {"dt", pc.cycle_dt},
          {"traffic", cfg.traffic.source == TrafficConfig::Source::Idm ? "idm" : "trace"},
          {"lanes", {{"count", pc.lanes.num_lanes}, {"width", pc.lanes.width}}},
          {"ellipse", {{"a", pc.a}, {"b", pc.b}}},
          {"vehicle", {{"length", cfg.vehicle_length}, {"width", cfg.vehicle_width}}},
          {"meta",
           {{"v_cruise", pc.meta.v_cruise},
            {"v_max", pc.meta.v_max},
            {"y_rl", pc.meta.y_rl},
            {"w1", pc.meta.w1},
            {"w2", pc.meta.w2}}},
          {"solver",
           {{"batch_size", pc.batch_size},
            {"num_samples", pc.num_samples},
            {"horizon", pc.horizon},
            {"degree", pc.degree},
            {"num_obstacles", pc.num_obstacles},
            {"rho_xy", pc.rho_xy},
            {"max_iter", pc.solver.max_iter},
            {"tol", pc.solver.tol},
            {"warm_start", to_string(pc.warm_start)}}}};
}

json cycle_json(long k, double t, const EgoState& ego, const std::vector<VehicleState>& vehicles,
                const CycleResult& r, bool emit_candidates) {
  json rec;
  rec["type"] = "cycle";
  rec["cycle"] = k;
  rec["t"] = t;
  rec["ego"] = ego_json(ego);
  rec["ego"]["v"] = ego.speed();
  rec["command"] = {{"accel", r.command.accel}, {"steering", r.command.steering}};
  rec["best_index"] = r.plan.best_index ? json(*r.plan.best_index) : json(nullptr);
  rec["executed_index"] = r.executed_index ? json(*r.executed_index) : json(nullptr);
  rec["fallback"] = fallback_name(r.fallback);
  rec["iterations"] = r.plan.iterations;
  rec["residual_history_len"] = r.plan.best_history.size();
  json hist = json::array();
  for (const auto& h : r.plan.best_history) hist.push_back({h[0], h[1], h[2]});
  rec["residuals"] = std::move(hist);

  json cands = json::array();
  for (const Candidate& c : r.plan.candidates) {
    cands.push_back({{"lane", c.goal.lane},
                     {"goal", {c.goal.x, c.goal.y, c.goal.vx}},
                     {"meta_cost", c.meta_cost},
                     {"mean_speed", c.traj.v.mean()},
                     {"feasible", c.check.feasible()},
                     {"residual", c.check.max_residual},
                     {"r_obs", c.r_obs},
                     {"r_acc", c.r_acc},
                     {"r_nonhol", c.r_nonhol},
                     {"max_heading", c.check.max_heading},
                     {"min_ratio", c.check.min_ratio}});
    if (emit_candidates) {
      json& j = cands.back();
      j["x"] = vec_json(c.traj.x);
      j["y"] = vec_json(c.traj.y);
      j["psi"] = vec_json(c.traj.psi);
      j["v"] = vec_json(c.traj.v);
    }
  }
  rec["candidates"] = std::move(cands);

  json obs = json::array();
  for (const VehicleState& o : r.obstacles) obs.push_back(o.id);
  rec["obstacle_ids"] = std::move(obs);
  json veh = json::array();
  for (const VehicleState& v : vehicles) veh.push_back(vehicle_json(v));
  rec["vehicles"] = std::move(veh);
  return rec;
}

json stat_json(const Stat& s) {
  return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}, {"count", s.count}};
}

void write_json_file(const std::filesystem::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw RunError("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

}  // namespace

// ---------------------------------------------------------------------------

ScenarioConfig canonical_dense_config() {
  ScenarioConfig cfg;
  cfg.name = "canonical_dense";
  cfg.seed = 1;
  cfg.ego.x = 0.0;
  cfg.ego.lane = 1;
  cfg.ego.v = 15.0;
  struct V {
    int lane;
    double x, v;
  };
  const V veh[] = {{0, -30.0, 12.0}, {0, 25.0, 12.0}, {0, 70.0, 12.5}, {1, -40.0, 15.0},
                   {1, 45.0, 13.0},  {2, -15.0, 16.0}, {2, 35.0, 16.0}, {2, 85.0, 16.5},
                   {3, 10.0, 18.0},  {3, 60.0, 18.0}};
  for (const V& v : veh) cfg.traffic.vehicles.push_back({v.lane, v.x, v.v, v.v});
  return cfg;
}

World build_world(const ScenarioConfig& cfg, std::uint64_t seed) {
  const TrafficConfig& tc = cfg.traffic;
  const LaneGeometry& lanes = cfg.planner.lanes;
  if (tc.source == TrafficConfig::Source::Trace) {
    TraceTable table = TraceTable::load_csv(tc.trace_path);
    World w(lanes, std::move(table));
    w.add_trace_vehicles();
    return w;
  }
  World w(lanes);
  w.ego_reach = tc.ego_reach;
  int id = 0;
  for (const IdmVehicleSpec& v : tc.vehicles) {
    IdmParams p = tc.idm;
    p.v0 = v.v0;
    VehicleState s;
    s.id = id++;
    s.x = v.x;
    s.y = lanes.center(v.lane);
    s.vx = v.v;
    s.lane = v.lane;
    w.add_idm(s, p);
  }
  if (tc.per_lane > 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int lane = 0; lane < lanes.num_lanes; ++lane) {
      const double base =
          tc.lane_v0[std::min<std::size_t>(static_cast<std::size_t>(lane), tc.lane_v0.size() - 1)];
      double x = tc.x_start + 0.5 * tc.spacing * unit(rng);
      for (int i = 0; i < tc.per_lane; ++i) {
        IdmParams p = tc.idm;
        p.v0 = std::max(base + tc.v0_spread * (2.0 * unit(rng) - 1.0), 1.0);
        VehicleState s;
        s.id = id++;
        s.x = x;
        s.y = lanes.center(lane);
        s.vx = p.v0;
        s.lane = lane;
        const bool near_ego = lane == cfg.ego.lane && std::abs(x - cfg.ego.x) < tc.ego_clearance;
        if (!near_ego) w.add_idm(s, p);
        x += tc.spacing * (0.7 + 0.6 * unit(rng));
      }
    }
  }
  return w;
}

EgoState initial_ego(const ScenarioConfig& cfg) {
  EgoState e;
  e.x = cfg.ego.x;
  e.y = cfg.planner.lanes.center(cfg.ego.lane);
  e.vx = cfg.ego.v;
  return e;
}

Stat Stat::of(const std::vector<double>& xs) {
  Stat s;
  s.count = static_cast<long>(xs.size());
  if (xs.empty()) return s;
  double sum = 0.0;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  for (double x : xs) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / static_cast<double>(xs.size());
  return s;
}

nlohmann::json to_json(const MetricsSummary& s) {
  json j = {{"scenario", s.scenario},
            {"kind", s.kind},
            {"cycles", s.cycles},
            {"duration", s.duration},
            {"complete", s.complete},
            {"meta_cost", stat_json(s.meta_cost)},
            {"velocity_residual", stat_json(s.velocity_residual)},
            {"linear_accel", stat_json(s.linear_accel)},
            {"angular_accel", stat_json(s.angular_accel)},
            {"velocity", stat_json(s.velocity)},
            {"lateral_distance", stat_json(s.lateral_distance)},
            {"iterations", stat_json(s.iterations)},
            {"collisions", s.collisions},
            {"min_ellipse_ratio", s.min_ellipse_ratio},
            {"relaxed_cycles", s.relaxed_cycles},
            {"emergency_cycles", s.emergency_cycles}};
  j["solve_time"] = s.solve_time ? stat_json(*s.solve_time) : json(nullptr);
  j["cycle_time"] = s.cycle_time ? stat_json(*s.cycle_time) : json(nullptr);
  return j;
}

bool footprints_overlap(double x1, double y1, double h1, double x2, double y2, double h2,
                        double length, double width) {
  const double hl = 0.5 * length, hw = 0.5 * width;
  const std::array<double, 2> axes[4] = {{std::cos(h1), std::sin(h1)},
                                         {-std::sin(h1), std::cos(h1)},
                                         {std::cos(h2), std::sin(h2)},
                                         {-std::sin(h2), std::cos(h2)}};
  const double dx = x2 - x1, dy = y2 - y1;
  for (const auto& ax : axes) {
    // Projected half extent of a box with heading h onto axis ax.
    auto extent = [&](double h) {
      const double c = std::cos(h), s = std::sin(h);
      return hl * std::abs(c * ax[0] + s * ax[1]) + hw * std::abs(-s * ax[0] + c * ax[1]);
    };
    if (std::abs(dx * ax[0] + dy * ax[1]) > extent(h1) + extent(h2)) return false;
  }
  return true;
}

MetricsSummary summarize(const std::vector<json>& log, const std::vector<json>& timing) {
  if (log.empty() || log.front().value("type", "") != "header")
    throw RunError("log has no header line");
  const json& hdr = log.front();
  std::vector<const json*> recs;
  bool aborted = false;
  for (std::size_t i = 1; i < log.size(); ++i) {
    const std::string type = log[i].value("type", "");
    if (type == "abort" && i + 1 == log.size()) {
      aborted = true;
    } else if (type == "cycle") {
      recs.push_back(&log[i]);
    } else {
      throw RunError("unexpected record type in log: " + type);
    }
  }
  if (recs.empty()) throw RunError("log has no cycle records");

  MetricsSummary s;
  try {
    s.scenario = hdr.at("scenario").get<std::string>();
    s.kind = hdr.at("kind").get<std::string>();
    s.complete = !aborted;
    const double dt = hdr.at("dt").get<double>();
    const double a = hdr.at("ellipse").at("a").get<double>();
    const double b = hdr.at("ellipse").at("b").get<double>();
    const double len = hdr.at("vehicle").at("length").get<double>();
    const double wid = hdr.at("vehicle").at("width").get<double>();
    MetaCostSpec meta;
    meta.kind = s.kind == "cruise" ? MetaKind::Cruise : MetaKind::HighSpeedRightLane;
    meta.v_cruise = hdr.at("meta").at("v_cruise").get<double>();
    meta.v_max = hdr.at("meta").at("v_max").get<double>();
    meta.y_rl = hdr.at("meta").at("y_rl").get<double>();
    meta.w1 = hdr.at("meta").at("w1").get<double>();
    meta.w2 = hdr.at("meta").at("w2").get<double>();

    s.cycles = static_cast<long>(recs.size());
    s.duration = static_cast<double>(recs.size()) * dt;
    std::vector<double> mc, vr, vel, lat, lin, ang, iters;
    double min_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < recs.size(); ++k) {
      const json& r = *recs[k];
      const json& e = r.at("ego");
      const double x = e.at("x").get<double>(), y = e.at("y").get<double>();
      const double psi = e.at("psi").get<double>();
      const double v = std::hypot(e.at("vx").get<double>(), e.at("vy").get<double>());
      mc.push_back(meta.at(v, y));
      vr.push_back((v - meta.v_cruise) * (v - meta.v_cruise));
      vel.push_back(v);
      lat.push_back(std::abs(y - meta.y_rl));
      iters.push_back(r.at("iterations").get<double>());
      if (k > 0) {
        const json& p = recs[k - 1]->at("ego");
        const double vp = std::hypot(p.at("vx").get<double>(), p.at("vy").get<double>());
        lin.push_back(std::abs(v - vp) / dt);
        ang.push_back(std::abs(e.at("psidot").get<double>() - p.at("psidot").get<double>()) / dt);
      }
      const std::string fb = r.at("fallback").get<std::string>();
      if (fb == "relaxed") ++s.relaxed_cycles;
      if (fb == "emergency") ++s.emergency_cycles;
      for (const json& o : r.at("vehicles")) {
        const double ox = o.at("x").get<double>(), oy = o.at("y").get<double>();
        const double ovx = o.at("vx").get<double>(), ovy = o.at("vy").get<double>();
        const double dx = (x - ox) / a, dy = (y - oy) / b;
        min_ratio = std::min(min_ratio, std::sqrt(dx * dx + dy * dy));
        const double oh = (ovx == 0.0 && ovy == 0.0) ? 0.0 : std::atan2(ovy, ovx);
        if (footprints_overlap(x, y, psi, ox, oy, oh, len, wid)) ++s.collisions;
      }
    }
    s.meta_cost = Stat::of(mc);
    s.velocity_residual = Stat::of(vr);
    s.velocity = Stat::of(vel);
    s.lateral_distance = Stat::of(lat);
    s.linear_accel = Stat::of(lin);
    s.angular_accel = Stat::of(ang);
    s.iterations = Stat::of(iters);
    s.min_ellipse_ratio = min_ratio;

    if (!timing.empty()) {
      std::vector<double> solve, cyc;
      for (const json& t : timing) {
        solve.push_back(t.at("solve_seconds").get<double>());
        cyc.push_back(t.at("cycle_seconds").get<double>());
      }
      s.solve_time = Stat::of(solve);
      s.cycle_time = Stat::of(cyc);
    }
  } catch (const json::exception& e) {
    throw RunError(std::string("malformed log: ") + e.what());
  }
  return s;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RunError("cannot open " + path);
  std::vector<json> out;
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw RunError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

MetricsSummary summarize_file(const std::string& run_jsonl) {
  const auto timing_path = std::filesystem::path(run_jsonl).parent_path() / "timing.jsonl";
  std::vector<json> timing;
  if (std::filesystem::exists(timing_path)) timing = read_jsonl(timing_path.string());
  return summarize(read_jsonl(run_jsonl), timing);
}

RunResult run_scenario(const ScenarioConfig& cfg, std::uint64_t seed, const RunOptions& opts) {
  namespace fs = std::filesystem;
  const fs::path dir(opts.out_dir.empty() ? "." : opts.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RunError("cannot create " + dir.string() + ": " + ec.message());

  const fs::path run_path = dir / "run.jsonl";
  const fs::path timing_path = dir / "timing.jsonl";
  std::ofstream run(run_path), timing(timing_path);
  if (!run || !timing) throw RunError("cannot write into " + dir.string());

  // std::endl after the header so a header always exists on disk even if
  // the first cycle takes the process down.
  json hdr = header_json(cfg, seed);
  run << hdr.dump() << std::endl;

  std::vector<json> log{hdr}, tlog;
  ClosedLoop loop(cfg, seed, cfg.planner);
  const long cycles = std::lround(cfg.duration / cfg.planner.cycle_dt);
  std::string failure;
  try {
    for (long k = 0; k < cycles; ++k) {
      const double t = loop.time();
      const EgoState ego = loop.ego();
      const std::vector<VehicleState> vehicles = loop.vehicles();
      const CycleResult r = loop.step();
      json rec = cycle_json(k, t, ego, vehicles, r, opts.emit_candidates);
      run << rec.dump() << "\n";
      json tr = {{"cycle", k}, {"solve_seconds", r.solve_seconds}, {"cycle_seconds", r.cycle_seconds}};
      timing << tr.dump() << "\n";
      log.push_back(std::move(rec));
      tlog.push_back(std::move(tr));
    }
  } catch (const std::exception& e) {
    failure = e.what();
    json ab = {{"type", "abort"}, {"error", failure}};
    run << ab.dump() << "\n";
    log.push_back(std::move(ab));
  }
  run.flush();
  timing.flush();

  RunResult res;
  res.cycles = static_cast<long>(tlog.size());
  if (res.cycles > 0) {
    res.summary = summarize(log, tlog);
    write_json_file(dir / "summary.json", to_json(res.summary));
  }
  if (!failure.empty()) throw RunError("run aborted after " + std::to_string(res.cycles) +
                                       " cycles: " + failure);
  return res;
}

std::vector<BatchTiming> bench_batch(const ScenarioConfig& cfg, std::uint64_t seed,
                                     const std::vector<int>& sizes, int cycles,
                                     bool fixed_iterations) {
  std::vector<BatchTiming> out;
  for (int l : sizes) {
    PlannerConfig pc = cfg.planner;
    pc.batch_size = l;
    if (fixed_iterations) pc.solver.tol = 0.0;
    const long f0 = KktSystem::factorization_count();
    ClosedLoop loop(cfg, seed, pc);
    std::vector<double> times;
    double iters = 0.0;
    for (int k = 0; k < cycles; ++k) {
      const CycleResult r = loop.step();
      times.push_back(r.solve_seconds);
      iters += r.plan.iterations;
    }
    const Stat st = Stat::of(times);
    BatchTiming bt;
    bt.batch_size = l;
    bt.mean = st.mean;
    bt.min = st.min;
    bt.max = st.max;
    bt.cycles = cycles;
    bt.mean_iterations = cycles > 0 ? iters / cycles : 0.0;
    bt.factorizations = KktSystem::factorization_count() - f0;
    out.push_back(bt);
  }
  return out;
}

void write_timing_csv(const std::string& path, const std::vector<BatchTiming>& rows) {
  std::ofstream out(path);
  if (!out) throw RunError("cannot write " + path);
  out << "batch_size,mean_solve_s,min_solve_s,max_solve_s,mean_iterations,cycles,factorizations\n";
  char buf[256];
  for (const BatchTiming& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.6g,%d,%ld\n", r.batch_size, r.mean,
                  r.min, r.max, r.mean_iterations, r.cycles, r.factorizations);
    out << buf;
  }
}

}  // namespace batchopt
