#pragma once

// Receding-horizon planner around the batch optimizer: goal sampling,
// candidate filtering and meta-cost ranking, control extraction.

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "batchopt/batch_solver.hpp"
#include "batchopt/traffic.hpp"

namespace batchopt {

struct EgoState {
  double x = 0.0, y = 0.0;
  double psi = 0.0, psidot = 0.0;
  double vx = 0.0, vy = 0.0;
  double ax = 0.0, ay = 0.0;

  double speed() const { return std::hypot(vx, vy); }
};

struct Goal {
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
  double ax = 0.0, ay = 0.0;
  int lane = 0;
};

enum class MetaKind { Cruise, HighSpeedRightLane };

struct MetaCostSpec {
  MetaKind kind = MetaKind::Cruise;
  double v_cruise = 15.0;
  double v_max = 22.0;
  double y_rl = 2.0;
  double w1 = 1.0;
  double w2 = 1.0;

  /// Instantaneous cost of one sample; meta_cost sums this over the grid.
  double at(double speed, double y) const;
};

/// Round-robin over lanes starting from lane 0, all at x + v_cruise t_f.
std::vector<Goal> sample_goals_cruise(const EgoState& ego, const LaneGeometry& lanes,
                                      const MetaCostSpec& spec, int l, double t_f);
/// ceil(0.6 l) goals on lane 0 spaced evenly over [0.5, 1] v_max t_f, the
/// rest round-robin over the other lanes at v_max t_f.
std::vector<Goal> sample_goals_highspeed(const EgoState& ego, const LaneGeometry& lanes,
                                         const MetaCostSpec& spec, int l, double t_f);
std::vector<Goal> sample_goals(const EgoState& ego, const LaneGeometry& lanes,
                               const MetaCostSpec& spec, int l, double t_f);

/// One sampled candidate trajectory.
struct Trajectory {
  Eigen::VectorXd x, y, psi, psidot, v, xdd, ydd;
};

double meta_cost(const Trajectory& traj, const MetaCostSpec& spec);

struct FilterLimits {
  double heading_limit = 13.0 * 3.14159265358979323846 / 180.0;
  double residual_tol = 1e-3;
  double collision_margin = 0.01;
  /// Lateral extent every sample must stay inside (road edges minus a
  /// half vehicle width). Unbounded when lo >= hi.
  double y_lo = 1.0, y_hi = 15.0;
  /// Residual bound of the relaxed fallback selection.
  double relaxed_residual_tol = 0.1;
};

/// Feasibility checks of one candidate. `min_ratio` is the ellipse ratio
/// recomputed from the sampled positions against the predictions, never
/// from the solver's auxiliary d.
struct Feasibility {
  bool heading_ok = true;
  bool residual_ok = true;
  bool clearance_ok = true;
  bool road_ok = true;
  double max_heading = 0.0;
  double max_residual = 0.0;
  double min_ratio = 0.0;

  bool feasible() const { return heading_ok && residual_ok && clearance_ok && road_ok; }
};

/// min over obstacles and samples of sqrt((dx / a)^2 + (dy / b)^2).
double min_ellipse_ratio(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y, double a,
                         double b);

Feasibility check_candidate(const Trajectory& traj, double max_residual,
                            const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y, double a,
                            double b, const FilterLimits& limits);

struct Candidate {
  Goal goal;
  Trajectory traj;
  double r_obs = 0.0, r_acc = 0.0, r_nonhol = 0.0;
  Feasibility check;
  double meta_cost = 0.0;
};

struct RankedPlan {
  std::vector<Candidate> candidates;
  std::optional<int> best_index;
  int iterations = 0;
  /// Residual history (r_obs, r_acc, r_nonhol) of the selected candidate,
  /// or of candidate 0 when nothing was selected.
  std::vector<std::array<double, 3>> best_history;
};

/// Replaces duplicate goals (same lane, position and speed as an earlier
/// goal) with traffic-aware variants. The lane's vehicles are predicted to
/// t_f at constant velocity and the goal is clamped into each gap between
/// them, kept 2a from both ends; copy k takes the k-th closest such spot
/// that differs from the sampled goal. A goal pushed back takes the speed of
/// the vehicle ahead of it, one pushed forward that of the vehicle behind.
/// Copies with no such spot are left unchanged.
void adapt_goals(std::vector<Goal>& goals, const EgoState& ego,
                 const std::vector<VehicleState>& vehicles, const LaneGeometry& lanes,
                 double t_f, double a, double v_min, double v_max);

/// argmin of meta-cost over feasible candidates, lowest index on ties.
std::optional<int> rank_candidates(const std::vector<Candidate>& candidates);
/// Same ranking over candidates that pass the heading, clearance and road checks
/// with max residual <= relaxed_tol.
std::optional<int> rank_relaxed(const std::vector<Candidate>& candidates, double relaxed_tol);

struct ControlCommand {
  double accel = 0.0;
  double steering = 0.0;
};

/// accel = (v(t_2) - v(t_1)) / dt_grid, steering = atan(psidot(t_1) h / v(t_1)).
/// v(t_1) is floored at v_min.
ControlCommand extract_control(const Trajectory& traj, double h, double dt_grid, double v_min);

enum class WarmStart {
  /// Every cycle cold-starts.
  None,
  /// Only the previously selected instance is warm-started, into its own slot.
  Best,
  /// Every instance whose previous max residual was at most
  /// PlannerConfig::warm_residual_tol restarts from its own previous
  /// solution; the others cold-start.
  All,
};

enum class FallbackMode {
  /// Hold the previous steering and brake toward v_min.
  Brake,
  /// IDM car-following toward the cruise speed behind the nearest vehicle
  /// ahead, with look-ahead steering back to the nearest lane centerline.
  Follow,
};

struct PlannerConfig {
  LaneGeometry lanes;
  int batch_size = 11;
  int num_samples = 100;
  double horizon = 10.0;
  int degree = 10;
  int num_obstacles = 10;
  double rho_xy = 1.0;
  SolverOptions solver;

  double a = 5.6, b = 3.1;
  double v_min = 0.1, v_max = 30.0, a_max = 4.0;
  FilterLimits limits;
  MetaCostSpec meta;
  double wheelbase = 2.5;
  double cycle_dt = 0.1;
  WarmStart warm_start = WarmStart::All;
  bool reset_multipliers = false;
  /// Warm-started multipliers are scaled by this each cycle.
  double warm_multiplier_decay = 0.97;
  double warm_residual_tol = 0.1;
  FallbackMode fallback = FallbackMode::Follow;
  /// Run adapt_goals on the sampled goals.
  bool traffic_aware_goals = true;
  /// Car-following law of the Follow fallback; v0 is replaced by the
  /// meta-cost target speed.
  IdmParams follow;
};

enum class Fallback {
  /// A fully feasible candidate was selected.
  None,
  /// Nothing passed the residual filter; drove the relaxed choice.
  Relaxed,
  /// Nothing usable; the FallbackMode controller drove.
  Emergency,
};

struct CycleResult {
  ControlCommand command;
  RankedPlan plan;
  Fallback fallback = Fallback::None;
  /// Candidate the ego follows this cycle: best_index or the relaxed choice.
  std::optional<int> executed_index;
  double solve_seconds = 0.0;
  double cycle_seconds = 0.0;
  /// Obstacles passed to the optimizer and their predictions.
  std::vector<VehicleState> obstacles;
  Eigen::VectorXd xi_x, xi_y;
};

class Planner {
 public:
  explicit Planner(PlannerConfig cfg);

  const PlannerConfig& config() const { return cfg_; }
  const BatchSolver& solver() const { return *solver_; }

  /// One MPC cycle: goals, batch assembly, solve, filter, rank, control.
  CycleResult cycle(const EgoState& ego, const std::vector<VehicleState>& neighbors);

  /// Ego state after following the trajectory of `plan` candidate `idx` for
  /// one cycle period.
  EgoState advance_along(const AmState& state, int idx, double dt) const;
  /// Unicycle integration of a command from `ego` for dt.
  EgoState advance_command(const EgoState& ego, const ControlCommand& cmd, double dt) const;

  /// State of the last solve (empty before the first cycle).
  const std::optional<AmState>& last_state() const { return last_state_; }

 private:
  ControlCommand fallback_command(const EgoState& ego,
                                  const std::vector<VehicleState>& neighbors) const;
  ProblemBatch build_batch(const EgoState& ego, const std::vector<Goal>& goals,
                           const std::vector<VehicleState>& obstacles) const;
  std::optional<AmState> warm_state(const ProblemBatch& batch) const;

  PlannerConfig cfg_;
  std::unique_ptr<BatchSolver> solver_;
  std::optional<AmState> last_state_;
  std::optional<int> last_best_;
  Eigen::VectorXd last_residual_;
  ControlCommand last_command_;
};

}  // namespace batchopt
