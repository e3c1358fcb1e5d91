#include "batchopt/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace batchopt {

double MetaCostSpec::at(double speed, double y) const {
  if (kind == MetaKind::Cruise) return (speed - v_cruise) * (speed - v_cruise);
  return w1 * (speed - v_max) * (speed - v_max) + w2 * (y - y_rl) * (y - y_rl);
}

std::vector<Goal> sample_goals_cruise(const EgoState& ego, const LaneGeometry& lanes,
                                      const MetaCostSpec& spec, int l, double t_f) {
  if (l < lanes.num_lanes) throw std::invalid_argument("batch smaller than lane count");
  std::vector<Goal> goals(static_cast<std::size_t>(l));
  for (int i = 0; i < l; ++i) {
    Goal& g = goals[static_cast<std::size_t>(i)];
    g.lane = i % lanes.num_lanes;
    g.x = ego.x + spec.v_cruise * t_f;
    g.y = lanes.center(g.lane);
    g.vx = spec.v_cruise;
  }
  return goals;
}

std::vector<Goal> sample_goals_highspeed(const EgoState& ego, const LaneGeometry& lanes,
                                         const MetaCostSpec& spec, int l, double t_f) {
  if (l < 2) throw std::invalid_argument("high-speed sampling needs l >= 2");
  const int right = static_cast<int>(std::ceil(0.6 * l - 1e-12));
  const double reach = spec.v_max * t_f;
  std::vector<Goal> goals;
  goals.reserve(static_cast<std::size_t>(l));
  for (int i = 0; i < right; ++i) {
    Goal g;
    const double frac = right == 1 ? 1.0 : 0.5 + 0.5 * i / (right - 1);
    g.lane = 0;
    g.x = ego.x + frac * reach;
    g.y = lanes.center(0);
    // Arrive at the average speed that covers the distance, so short goals
    // do not force a deceleration at the end of the horizon.
    g.vx = frac * spec.v_max;
    goals.push_back(g);
  }
  const int others = std::max(lanes.num_lanes - 1, 1);
  for (int i = 0; i < l - right; ++i) {
    Goal g;
    g.lane = lanes.num_lanes > 1 ? 1 + i % others : 0;
    g.x = ego.x + reach;
    g.y = lanes.center(g.lane);
    g.vx = spec.v_max;
    goals.push_back(g);
  }
  return goals;
}

std::vector<Goal> sample_goals(const EgoState& ego, const LaneGeometry& lanes,
                               const MetaCostSpec& spec, int l, double t_f) {
  return spec.kind == MetaKind::Cruise ? sample_goals_cruise(ego, lanes, spec, l, t_f)
                                       : sample_goals_highspeed(ego, lanes, spec, l, t_f);
}

void adapt_goals(std::vector<Goal>& goals, const EgoState& ego,
                 const std::vector<VehicleState>& vehicles, const LaneGeometry& lanes,
                 double t_f, double a, double v_min, double v_max) {
  struct Spot {
    double x, vx, cost;
  };
  const std::vector<Goal> sampled = goals;
  const double margin = 2.0 * a;
  const double x_lo = ego.x + v_min * t_f, x_hi = ego.x + v_max * t_f;
  for (std::size_t i = 0; i < goals.size(); ++i) {
    int copies = 0;
    for (std::size_t j = 0; j < i; ++j) {
      const Goal& o = sampled[j];
      if (o.lane == sampled[i].lane && o.x == sampled[i].x && o.vx == sampled[i].vx) ++copies;
    }
    if (copies == 0) continue;
    Goal& g = goals[i];
    const double yc = lanes.center(g.lane);
    // Spot for the gap between a vehicle behind and one ahead at t_f: the
    // goal clamped into it, with the speed of the end it was pushed to.
    std::vector<Spot> spots;
    auto add = [&](const VehicleState* back, const VehicleState* front) {
      double lo = x_lo, hi = x_hi;
      if (back) lo = std::max(lo, back->x + back->vx * t_f + margin);
      if (front) hi = std::min(hi, front->x + front->vx * t_f - margin);
      if (!(lo <= hi)) return;
      Spot sp{std::clamp(g.x, lo, hi), g.vx, 0.0};
      if (back && sp.x > g.x) sp.vx = std::max(g.vx, back->vx);
      if (front && sp.x < g.x) sp.vx = std::min(g.vx, front->vx);
      sp.vx = std::clamp(sp.vx, v_min, v_max);
      sp.cost = std::abs(sp.x - g.x);
      if (sp.cost > 0.0) spots.push_back(sp);
    };
    std::vector<const VehicleState*> in_lane;
    for (const VehicleState& v : vehicles)
      if (std::abs(v.y - yc) < 0.5 * lanes.width) in_lane.push_back(&v);
    if (g.lane == lanes.lane_of(ego.y)) {
      // Staying in lane the ego keeps its place in the queue.
      const VehicleState *back = nullptr, *front = nullptr;
      for (const VehicleState* v : in_lane) {
        if (v->x > ego.x) {
          if (!front || v->x < front->x) front = v;
        } else if (!back || v->x > back->x) {
          back = v;
        }
      }
      add(back, front);
    } else {
      std::sort(in_lane.begin(), in_lane.end(), [t_f](const VehicleState* p, const VehicleState* q) {
        return p->x + p->vx * t_f < q->x + q->vx * t_f;
      });
      for (std::size_t k = 0; k <= in_lane.size(); ++k)
        add(k > 0 ? in_lane[k - 1] : nullptr, k < in_lane.size() ? in_lane[k] : nullptr);
    }
    std::stable_sort(spots.begin(), spots.end(),
              [](const Spot& p, const Spot& q) { return p.cost < q.cost; });
    if (static_cast<std::size_t>(copies) > spots.size()) continue;
    g.x = spots[static_cast<std::size_t>(copies) - 1].x;
    g.vx = spots[static_cast<std::size_t>(copies) - 1].vx;
  }
}

double meta_cost(const Trajectory& traj, const MetaCostSpec& spec) {
  double c = 0.0;
  for (Eigen::Index k = 0; k < traj.v.size(); ++k) c += spec.at(traj.v(k), traj.y(k));
  return c;
}

double min_ellipse_ratio(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y, double a,
                         double b) {
  const Eigen::Index n = x.size();
  const Eigen::Index m = n > 0 ? xi_x.size() / n : 0;
  double best = INFINITY;
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index k = 0; k < n; ++k) {
      const double dx = (x(k) - xi_x(j * n + k)) / a;
      const double dy = (y(k) - xi_y(j * n + k)) / b;
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
  return best;
}

Feasibility check_candidate(const Trajectory& traj, double max_residual,
                            const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y, double a,
                            double b, const FilterLimits& limits) {
  Feasibility f;
  f.max_heading = traj.psi.size() > 0 ? traj.psi.cwiseAbs().maxCoeff() : 0.0;
  f.max_residual = max_residual;
  f.min_ratio = min_ellipse_ratio(traj.x, traj.y, xi_x, xi_y, a, b);
  f.heading_ok = f.max_heading <= limits.heading_limit;
  f.residual_ok = max_residual <= limits.residual_tol;
  f.clearance_ok = f.min_ratio >= 1.0 - limits.collision_margin;
  if (limits.y_lo < limits.y_hi && traj.y.size() > 0)
    f.road_ok = traj.y.minCoeff() >= limits.y_lo && traj.y.maxCoeff() <= limits.y_hi;
  return f;
}

std::optional<int> rank_candidates(const std::vector<Candidate>& candidates) {
  std::optional<int> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    if (!c.check.feasible()) continue;
    if (!best || c.meta_cost < candidates[static_cast<std::size_t>(*best)].meta_cost)
      best = static_cast<int>(i);
  }
  return best;
}

std::optional<int> rank_relaxed(const std::vector<Candidate>& candidates, double relaxed_tol) {
  std::optional<int> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    if (!c.check.heading_ok || !c.check.clearance_ok || !c.check.road_ok ||
        !(c.check.max_residual <= relaxed_tol))
      continue;
    if (!best || c.meta_cost < candidates[static_cast<std::size_t>(*best)].meta_cost)
      best = static_cast<int>(i);
  }
  return best;
}

ControlCommand extract_control(const Trajectory& traj, double h, double dt_grid, double v_min) {
  if (traj.v.size() < 2) throw std::invalid_argument("trajectory needs at least 2 samples");
  ControlCommand c;
  c.accel = (traj.v(1) - traj.v(0)) / dt_grid;
  const double v = std::max(traj.v(0), v_min);
  c.steering = std::atan(traj.psidot(0) * h / v);
  return c;
}

// ---------------------------------------------------------------------------

namespace {

// Shifts each column of an (blocks*n x l) matrix one sample earlier inside
// every n-row block, repeating the last sample.
Eigen::MatrixXd shift_rows(const Eigen::MatrixXd& m, Eigen::Index n) {
  Eigen::MatrixXd out = m;
  const Eigen::Index blocks = n > 0 ? m.rows() / n : 0;
  for (Eigen::Index j = 0; j < blocks; ++j)
    out.middleRows(j * n, n - 1) = m.middleRows(j * n + 1, n - 1);
  return out;
}

}  // namespace

Planner::Planner(PlannerConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(cfg_.cycle_dt > 0.0)) throw std::invalid_argument("cycle_dt must be positive");
  SolverOptions opts = cfg_.solver;
  opts.reset_multipliers_on_warm_start = cfg_.reset_multipliers;
  solver_ = std::make_unique<BatchSolver>(
      build_basis(build_time_grid(0.0, cfg_.horizon, cfg_.num_samples), cfg_.degree),
      cfg_.num_obstacles, cfg_.rho_xy, opts);
}

ProblemBatch Planner::build_batch(const EgoState& ego, const std::vector<Goal>& goals,
                                  const std::vector<VehicleState>& obstacles) const {
  ProblemBatch batch;
  predict_constant_velocity(obstacles, solver_->basis().grid, batch.xi_x, batch.xi_y);
  batch.a = cfg_.a;
  batch.b = cfg_.b;
  batch.v_min = cfg_.v_min;
  batch.v_max = cfg_.v_max;
  batch.a_max = cfg_.a_max;
  batch.rho_xy = cfg_.rho_xy;
  const int L = static_cast<int>(goals.size());
  const auto& cm = solver_->matrices();
  const Eigen::Index ra = cm.A_axis.rows();
  batch.b_xy.resize(2 * ra, L);
  batch.b_psi.resize(cm.A_psi.rows(), L);
  for (int l = 0; l < L; ++l) {
    const Goal& g = goals[static_cast<std::size_t>(l)];
    const double xs[6] = {ego.x, ego.vx, ego.ax, g.x, g.vx, g.ax};
    const double ys[6] = {ego.y, ego.vy, ego.ay, g.y, g.vy, g.ay};
    const bool flags[6] = {cm.xy_spec.start_pos, cm.xy_spec.start_vel, cm.xy_spec.start_acc,
                           cm.xy_spec.end_pos,   cm.xy_spec.end_vel,   cm.xy_spec.end_acc};
    Eigen::Index r = 0;
    for (int i = 0; i < 6; ++i) {
      if (!flags[i]) continue;
      batch.b_xy(r, l) = xs[i];
      batch.b_xy(ra + r, l) = ys[i];
      ++r;
    }
    const double ps[6] = {ego.psi, ego.psidot, 0.0, 0.0, 0.0, 0.0};
    const bool pflags[6] = {cm.psi_spec.start_pos, cm.psi_spec.start_vel, cm.psi_spec.start_acc,
                            cm.psi_spec.end_pos,   cm.psi_spec.end_vel,   cm.psi_spec.end_acc};
    r = 0;
    for (int i = 0; i < 6; ++i)
      if (pflags[i]) batch.b_psi(r++, l) = ps[i];
  }
  return batch;
}

std::optional<AmState> Planner::warm_state(const ProblemBatch& batch) const {
  if (!last_state_ || cfg_.warm_start == WarmStart::None) return std::nullopt;
  if (last_state_->size() != batch.size()) return std::nullopt;
  if (cfg_.warm_start == WarmStart::Best && !last_best_) return std::nullopt;

  const BasisSet& basis = solver_->basis();
  const Eigen::Index n = basis.num_samples();
  const Eigen::Index nb = basis.num_basis();
  const Eigen::Index ra = solver_->matrices().A_axis.rows();
  // Refit of every curve sampled one cycle later onto the basis.
  Eigen::MatrixXd P_shift(n, nb);
  for (Eigen::Index k = 0; k < n; ++k)
    P_shift.row(k) = basis.row_at(basis.grid.at(static_cast<int>(k)) + cfg_.cycle_dt, 0);
  const Eigen::MatrixXd shift =
      (basis.P.transpose() * basis.P).ldlt().solve(basis.P.transpose() * P_shift);

  // The executed instance is one cycle further along its own trajectory, so
  // it moves forward in time. Every other instance faces nearly the problem
  // it just solved, seen from a displaced start with a goal that moved along,
  // so it is only translated; a time shift there would undo its progress.
  AmState prev = *last_state_;
  for (int l = 0; l < prev.size(); ++l) {
    if (last_best_ && l == *last_best_) {
      prev.c_x.col(l) = shift * prev.c_x.col(l);
      prev.c_y.col(l) = shift * prev.c_y.col(l);
      prev.c_psi.col(l) = shift * prev.c_psi.col(l);
      prev.alpha_a.col(l) = shift_rows(prev.alpha_a.col(l), n);
      prev.d_a.col(l) = shift_rows(prev.d_a.col(l), n);
      prev.v.col(l) = shift_rows(prev.v.col(l), n);
    } else {
      // Bernstein coefficients sum to one, so a constant offset translates the curve.
      prev.c_x.col(l).array() += batch.b_xy(0, l) - basis.P.row(0).dot(prev.c_x.col(l));
      prev.c_y.col(l).array() += batch.b_xy(ra, l) - basis.P.row(0).dot(prev.c_y.col(l));
    }
  }
  // Obstacle slots are refilled every cycle and may now hold a different
  // vehicle, so the line-of-sight variables are recomputed.
  solver_->step_alpha_obs(prev, batch);
  solver_->step_d_obs(prev, batch);
  // Multipliers outlast the obstacles that built them up; fading them keeps
  // an old swerve from steering the new solve.
  prev.lambda_x *= cfg_.warm_multiplier_decay;
  prev.lambda_y *= cfg_.warm_multiplier_decay;
  prev.lambda_psi *= cfg_.warm_multiplier_decay;

  AmState s = solver_->init_state(batch);
  if (cfg_.warm_start == WarmStart::Best) {
    s.set_column(*last_best_, prev, *last_best_);
    return s;
  }
  for (int l = 0; l < s.size(); ++l)
    if (last_residual_(l) <= cfg_.warm_residual_tol) s.set_column(l, prev, l);
  return s;
}

CycleResult Planner::cycle(const EgoState& ego, const std::vector<VehicleState>& neighbors) {
  const auto t_start = std::chrono::steady_clock::now();
  CycleResult out;
  out.obstacles = select_nearest(neighbors, ego.x, ego.y, cfg_.num_obstacles);
  std::vector<Goal> goals =
      sample_goals(ego, cfg_.lanes, cfg_.meta, cfg_.batch_size, cfg_.horizon);
  if (cfg_.traffic_aware_goals)
    adapt_goals(goals, ego, out.obstacles, cfg_.lanes, cfg_.horizon, cfg_.a, cfg_.v_min,
                cfg_.v_max);
  const ProblemBatch batch = build_batch(ego, goals, out.obstacles);
  out.xi_x = batch.xi_x;
  out.xi_y = batch.xi_y;

  const std::optional<AmState> warm = warm_state(batch);
  const auto t_solve = std::chrono::steady_clock::now();
  SolveResult res = solver_->solve(batch, warm ? &*warm : nullptr);
  out.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_solve).count();

  const SampledTrajectories st = solver_->sample(res.state);
  const Residuals& last = res.history.back();
  RankedPlan& plan = out.plan;
  plan.iterations = res.iterations;
  plan.candidates.resize(goals.size());
  for (std::size_t i = 0; i < goals.size(); ++i) {
    const Eigen::Index l = static_cast<Eigen::Index>(i);
    Candidate& c = plan.candidates[i];
    c.goal = goals[i];
    c.traj.x = st.x.col(l);
    c.traj.y = st.y.col(l);
    c.traj.psi = st.psi.col(l);
    c.traj.psidot = st.psid.col(l);
    c.traj.v = (st.xd.col(l).array().square() + st.yd.col(l).array().square()).sqrt().matrix();
    c.traj.xdd = st.xdd.col(l);
    c.traj.ydd = st.ydd.col(l);
    c.r_obs = last.r_obs(l);
    c.r_acc = last.r_acc(l);
    c.r_nonhol = last.r_nonhol(l);
    c.check = check_candidate(c.traj, last.max_of(static_cast<int>(l)), batch.xi_x, batch.xi_y,
                              cfg_.a, cfg_.b, cfg_.limits);
    c.meta_cost = meta_cost(c.traj, cfg_.meta);
  }
  plan.best_index = rank_candidates(plan.candidates);
  const int hist_idx = plan.best_index.value_or(0);
  plan.best_history.reserve(res.history.size());
  for (const Residuals& r : res.history)
    plan.best_history.push_back({r.r_obs(hist_idx), r.r_acc(hist_idx), r.r_nonhol(hist_idx)});

  out.executed_index = plan.best_index;
  if (!out.executed_index) {
    out.executed_index = rank_relaxed(plan.candidates, cfg_.limits.relaxed_residual_tol);
    if (out.executed_index) out.fallback = Fallback::Relaxed;
  }
  if (out.executed_index) {
    out.command =
        extract_control(plan.candidates[static_cast<std::size_t>(*out.executed_index)].traj,
                        cfg_.wheelbase, solver_->basis().grid.dt, cfg_.v_min);
  } else {
    out.fallback = Fallback::Emergency;
    out.command = fallback_command(ego, neighbors);
  }
  last_command_ = out.command;
  last_state_ = std::move(res.state);
  last_best_ = out.executed_index;
  last_residual_.resize(static_cast<Eigen::Index>(plan.candidates.size()));
  for (std::size_t i = 0; i < plan.candidates.size(); ++i)
    last_residual_(static_cast<Eigen::Index>(i)) = plan.candidates[i].check.max_residual;
  out.cycle_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

ControlCommand Planner::fallback_command(const EgoState& ego,
                                         const std::vector<VehicleState>& neighbors) const {
  ControlCommand c;
  const double v = ego.speed();
  if (cfg_.fallback == FallbackMode::Brake) {
    c.steering = last_command_.steering;
    c.accel = std::max(-cfg_.a_max, (cfg_.v_min - v) / cfg_.cycle_dt);
    return c;
  }
  VehicleState self;
  self.x = ego.x;
  self.y = ego.y;
  self.vx = v;
  std::optional<VehicleState> leader;
  for (const VehicleState& o : neighbors) {
    if (o.x <= ego.x || std::abs(o.y - ego.y) >= cfg_.b) continue;
    if (!leader || o.x < leader->x) leader = o;
  }
  IdmParams p = cfg_.follow;
  p.v0 = cfg_.meta.kind == MetaKind::Cruise ? cfg_.meta.v_cruise : cfg_.meta.v_max;
  c.accel = std::clamp(idm_accel(self, leader, p), -cfg_.a_max, cfg_.a_max);

  const double y_c = cfg_.lanes.center(cfg_.lanes.lane_of(ego.y));
  const double v_eff = std::max(v, 1.0);
  const double lookahead = std::max(2.0 * v_eff, 10.0);
  const double psi_ref = std::atan(-(ego.y - y_c) / lookahead);
  const double psidot_cmd = (psi_ref - ego.psi) / 0.5;
  c.steering = std::atan(psidot_cmd * cfg_.wheelbase / v_eff);
  return c;
}

EgoState Planner::advance_along(const AmState& state, int idx, double dt) const {
  const BasisSet& basis = solver_->basis();
  const double t = basis.grid.t0 + dt;
  const Eigen::RowVectorXd p0 = basis.row_at(t, 0);
  const Eigen::RowVectorXd p1 = basis.row_at(t, 1);
  const Eigen::RowVectorXd p2 = basis.row_at(t, 2);
  EgoState e;
  e.x = p0.dot(state.c_x.col(idx));
  e.y = p0.dot(state.c_y.col(idx));
  e.vx = p1.dot(state.c_x.col(idx));
  e.vy = p1.dot(state.c_y.col(idx));
  e.ax = p2.dot(state.c_x.col(idx));
  e.ay = p2.dot(state.c_y.col(idx));
  // Heading of a non-holonomic vehicle is its direction of travel; taking
  // it from c_psi would carry any unconverged mismatch into the next
  // cycle's boundary conditions, where it can no longer be removed.
  const double v2 = e.vx * e.vx + e.vy * e.vy;
  if (v2 > 1e-12) {
    e.psi = std::atan2(e.vy, e.vx);
    e.psidot = (e.vx * e.ay - e.vy * e.ax) / v2;
  } else {
    e.psi = p0.dot(state.c_psi.col(idx));
    e.psidot = p1.dot(state.c_psi.col(idx));
  }
  return e;
}

EgoState Planner::advance_command(const EgoState& ego, const ControlCommand& cmd,
                                  double dt) const {
  const double v0 = ego.speed();
  const double v1 = std::max(v0 + cmd.accel * dt, 0.0);
  const double psidot = v0 * std::tan(cmd.steering) / cfg_.wheelbase;
  EgoState e = ego;
  e.psi = ego.psi + psidot * dt;
  e.psidot = psidot;
  const double vm = 0.5 * (v0 + v1);
  const double hm = 0.5 * (ego.psi + e.psi);
  e.x = ego.x + vm * std::cos(hm) * dt;
  e.y = ego.y + vm * std::sin(hm) * dt;
  e.vx = v1 * std::cos(e.psi);
  e.vy = v1 * std::sin(e.psi);
  const double along = (v1 - v0) / dt;
  e.ax = along * std::cos(e.psi) - v1 * psidot * std::sin(e.psi);
  e.ay = along * std::sin(e.psi) + v1 * psidot * std::cos(e.psi);
  return e;
}

}  // namespace batchopt
