#include "batchopt/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace batchopt {

int LaneGeometry::lane_of(double y) const {
  const int lane = static_cast<int>(std::floor(y / width));
  return std::clamp(lane, 0, num_lanes - 1);
}

double idm_accel(const VehicleState& f, const std::optional<VehicleState>& leader,
                 const IdmParams& p) {
  const double v = std::max(f.vx, 0.0);
  double acc = p.a_idm * (1.0 - std::pow(v / p.v0, 4));
  if (leader) {
    const double gap = leader->x - f.x - p.length;
    if (gap <= 0.0) return -p.hard_decel;
    const double dv = v - leader->vx;
    const double dyn = v * p.T + v * dv / (2.0 * std::sqrt(p.a_idm * p.b_idm));
    const double s_star = p.s0 + std::max(dyn, 0.0);
    acc -= p.a_idm * (s_star / gap) * (s_star / gap);
  }
  return std::max(acc, -p.hard_decel);
}

// ---------------------------------------------------------------------------

TraceTable TraceTable::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,id,x,y,vx,vy")
    throw std::runtime_error("trace header must be t,id,x,y,vx,vy in " + path);

  TraceTable table;
  int lineno = 1;
  double first_t = NAN, second_t = NAN;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    double vals[6];
    int c = 0;
    while (c < 6 && std::getline(ss, cell, ',')) {
      try {
        vals[c++] = std::stod(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad number");
      }
    }
    if (c != 6) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": need 6 fields");
    const Row r{vals[0], vals[2], vals[3], vals[4], vals[5]};
    table.add(static_cast<int>(vals[1]), r);
    if (std::isnan(first_t)) {
      first_t = r.t;
    } else if (std::isnan(second_t) && r.t > first_t) {
      second_t = r.t;
    }
  }
  if (!std::isnan(second_t)) table.period_ = second_t - first_t;
  return table;
}

void TraceTable::save_csv(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot write trace file " + path);
  std::fprintf(f, "t,id,x,y,vx,vy\n");
  // Time-major order, which is how a recorder would emit it.
  std::size_t max_rows = 0;
  for (const auto& [id, rows] : rows_) max_rows = std::max(max_rows, rows.size());
  for (std::size_t i = 0; i < max_rows; ++i)
    for (const auto& [id, rows] : rows_) {
      if (i >= rows.size()) continue;
      const Row& r = rows[i];
      std::fprintf(f, "%.10g,%d,%.17g,%.17g,%.17g,%.17g\n", r.t, id, r.x, r.y, r.vx, r.vy);
    }
  std::fclose(f);
}

void TraceTable::add(int id, const Row& row) {
  auto& rows = rows_[id];
  if (!rows.empty() && !(row.t > rows.back().t)) {
    throw std::runtime_error("trace rows for id " + std::to_string(id) +
                             " must have strictly increasing time");
  }
  rows.push_back(row);
}

std::vector<int> TraceTable::ids() const {
  std::vector<int> out;
  for (const auto& kv : rows_) out.push_back(kv.first);
  return out;
}

const std::vector<TraceTable::Row>& TraceTable::rows(int id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw std::out_of_range("unknown trace id " + std::to_string(id));
  return it->second;
}

double TraceTable::end_time() const {
  double t = 0.0;
  for (const auto& kv : rows_) t = std::max(t, kv.second.back().t);
  return t;
}

VehicleState TraceTable::query(int id, double t, const LaneGeometry& lanes) const {
  const auto& rows = this->rows(id);
  VehicleState s;
  s.id = id;
  auto fill = [&](double x, double y, double vx, double vy) {
    s.x = x;
    s.y = y;
    s.vx = vx;
    s.vy = vy;
    s.lane = lanes.lane_of(y);
  };
  if (t <= rows.front().t) {
    const Row& r = rows.front();
    fill(r.x, r.y, r.vx, r.vy);
    return s;
  }
  if (t >= rows.back().t) {
    const Row& r = rows.back();
    const double h = t - r.t;
    fill(r.x + r.vx * h, r.y + r.vy * h, r.vx, r.vy);
    return s;
  }
  // Last row with row.t <= t.
  auto it = std::upper_bound(rows.begin(), rows.end(), t,
                             [](double tv, const Row& r) { return tv < r.t; });
  const Row& r1 = *it;
  const Row& r0 = *(it - 1);
  const double w = (t - r0.t) / (r1.t - r0.t);
  fill(r0.x + w * (r1.x - r0.x), r0.y + w * (r1.y - r0.y), r0.vx + w * (r1.vx - r0.vx),
       r0.vy + w * (r1.vy - r0.vy));
  return s;
}

// ---------------------------------------------------------------------------

World::World(LaneGeometry lanes, std::optional<TraceTable> traces)
    : lanes_(lanes), traces_(std::move(traces)) {}

void World::add_idm(VehicleState s, const IdmParams& p) {
  s.lane = lanes_.lane_of(s.y);
  s.y = lanes_.center(s.lane);
  s.vy = 0.0;
  vehicles_.push_back({s, Kind::Idm, p});
}

void World::add_trace_vehicles() {
  if (!traces_) throw std::logic_error("world has no trace table");
  for (int id : traces_->ids()) vehicles_.push_back({traces_->query(id, t_, lanes_), Kind::Trace, {}});
}

void World::step(double dt, const std::optional<EgoPose>& ego) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  std::vector<double> acc(vehicles_.size(), 0.0);
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    const Vehicle& v = vehicles_[i];
    if (v.kind != Kind::Idm) continue;
    std::optional<VehicleState> leader;
    for (std::size_t j = 0; j < vehicles_.size(); ++j) {
      if (j == i) continue;
      const VehicleState& o = vehicles_[j].state;
      if (o.lane != v.state.lane || o.x <= v.state.x) continue;
      if (!leader || o.x < leader->x) leader = o;
    }
    if (ego && std::abs(ego->y - lanes_.center(v.state.lane)) < ego_reach && ego->x > v.state.x &&
        (!leader || ego->x < leader->x)) {
      VehicleState e;
      e.x = ego->x;
      e.y = ego->y;
      e.vx = ego->vx;
      e.vy = ego->vy;
      leader = e;
    }
    acc[i] = idm_accel(v.state, leader, v.idm);
  }
  t_ += dt;
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    Vehicle& v = vehicles_[i];
    if (v.kind == Kind::Idm) {
      v.state.vx = std::max(v.state.vx + acc[i] * dt, 0.0);
      v.state.x += v.state.vx * dt;
    } else {
      v.state = traces_->query(v.state.id, t_, lanes_);
    }
  }
}

std::vector<VehicleState> World::states() const {
  std::vector<VehicleState> out;
  out.reserve(vehicles_.size());
  for (const auto& v : vehicles_) out.push_back(v.state);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<VehicleState> select_nearest(const std::vector<VehicleState>& vehicles, double x,
                                         double y, int m, double pad_distance) {
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(vehicles.size());
  for (std::size_t i = 0; i < vehicles.size(); ++i)
    order.emplace_back(std::hypot(vehicles[i].x - x, vehicles[i].y - y), i);
  std::sort(order.begin(), order.end(), [&](const auto& p, const auto& q) {
    if (p.first != q.first) return p.first < q.first;
    return vehicles[p.second].id < vehicles[q.second].id;
  });
  std::vector<VehicleState> out;
  for (std::size_t i = 0; i < order.size() && static_cast<int>(out.size()) < m; ++i)
    out.push_back(vehicles[order[i].second]);
  while (static_cast<int>(out.size()) < m) {
    VehicleState pad;
    pad.id = -1 - static_cast<int>(out.size());
    pad.x = x + pad_distance;
    pad.y = y + pad_distance;
    out.push_back(pad);
  }
  return out;
}

void predict_constant_velocity(const std::vector<VehicleState>& vehicles, const TimeGrid& grid,
                               Eigen::VectorXd& xi_x, Eigen::VectorXd& xi_y) {
  const Eigen::Index n = grid.n;
  const Eigen::Index m = static_cast<Eigen::Index>(vehicles.size());
  xi_x.resize(m * n);
  xi_y.resize(m * n);
  for (Eigen::Index j = 0; j < m; ++j) {
    const VehicleState& v = vehicles[static_cast<std::size_t>(j)];
    for (Eigen::Index k = 0; k < n; ++k) {
      const double h = grid.at(static_cast<int>(k)) - grid.t0;
      xi_x(j * n + k) = v.x + v.vx * h;
      xi_y(j * n + k) = v.y + v.vy * h;
    }
  }
}

// ---------------------------------------------------------------------------

TraceTable generate_synthetic_trace(const SyntheticTraceSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [](const std::vector<double>& v, int lane) {
    return v[std::min<std::size_t>(static_cast<std::size_t>(lane), v.size() - 1)];
  };

  struct Brake {
    double start, stop, factor;
  };
  std::vector<World::Vehicle> veh;
  std::vector<double> base_v0;
  std::vector<std::optional<Brake>> brakes;
  int id = 0;
  for (int lane = 0; lane < spec.lanes.num_lanes; ++lane) {
    const double lo = pick(spec.lane_speed_lo, lane);
    const double hi = pick(spec.lane_speed_hi, lane);
    double x = spec.x_start + unit(rng) * spec.mean_spacing;
    for (int i = 0; i < spec.vehicles_per_lane; ++i) {
      IdmParams p;
      p.v0 = lo + (hi - lo) * unit(rng);
      VehicleState s;
      s.id = id++;
      s.x = x;
      s.y = spec.lanes.center(lane);
      s.vx = p.v0;
      s.lane = lane;
      veh.push_back({s, World::Kind::Idm, p});
      base_v0.push_back(p.v0);
      if (unit(rng) < spec.brake_probability) {
        const double start = 5.0 + unit(rng) * (spec.duration - 15.0);
        brakes.push_back(Brake{start, start + 3.0 + 4.0 * unit(rng), 0.5 + 0.3 * unit(rng)});
      } else {
        brakes.emplace_back();
      }
      x += spec.mean_spacing * (0.7 + 0.6 * unit(rng));
    }
  }

  // Stepped here rather than through World because braking episodes change
  // the desired speed over time.
  TraceTable table;
  table.set_period(spec.period);
  const int steps = static_cast<int>(std::llround(spec.duration / spec.period));
  for (int s = 0; s <= steps; ++s) {
    const double t = s * spec.period;
    for (const auto& v : veh)
      table.add(v.state.id, {t, v.state.x, v.state.y, v.state.vx, v.state.vy});
    if (s == steps) break;
    std::vector<double> acc(veh.size());
    for (std::size_t i = 0; i < veh.size(); ++i) {
      IdmParams p = veh[i].idm;
      p.v0 = base_v0[i];
      if (brakes[i] && t >= brakes[i]->start && t < brakes[i]->stop) p.v0 *= brakes[i]->factor;
      std::optional<VehicleState> leader;
      for (std::size_t j = 0; j < veh.size(); ++j) {
        const auto& o = veh[j].state;
        if (j == i || o.lane != veh[i].state.lane || o.x <= veh[i].state.x) continue;
        if (!leader || o.x < leader->x) leader = o;
      }
      acc[i] = idm_accel(veh[i].state, leader, p);
    }
    for (std::size_t i = 0; i < veh.size(); ++i) {
      veh[i].state.vx = std::max(veh[i].state.vx + acc[i] * spec.period, 0.0);
      veh[i].state.x += veh[i].state.vx * spec.period;
    }
  }
  return table;
}

}  // namespace batchopt
