#pragma once

// Brute-force and independent reference computations used to check the
// solver: a dense null-space QP solver, grid searches over each closed-form
// subproblem's objective, scalar-loop constraint residuals, a direct
// Bernstein evaluation and the batch-vs-sequential comparison. Nothing here
// reuses the solver's kernels; it only reads their outputs.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "batchopt/batch_solver.hpp"
#include "batchopt/planner.hpp"

namespace batchopt::oracle {

struct Check {
  std::string name;
  bool pass = false;
  /// Measured quantity and the bound it was compared against.
  double value = 0.0;
  double bound = 0.0;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;
  bool pass() const;
};

// --- independent evaluations ----------------------------------------------

/// Binomial-formula Bernstein polynomial B_{i,deg}(tau) and its derivatives
/// with respect to t for a horizon of length T (order 0, 1 or 2).
double bernstein(int deg, int i, double tau, int order = 0, double T = 1.0);

/// Minimizer of 0.5 x^T H x - f^T x subject to A x = b by the null-space
/// method (QR of A^T), with the multipliers of the stationarity condition
/// H x + A^T mu = f.
struct EqQpSolution {
  Eigen::VectorXd x, mu;
};
EqQpSolution solve_equality_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& f,
                               const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

/// Argmin of f on the grid lo, lo + res, ..., hi (hi always included).
double grid_argmin(const std::function<double(double)>& f, double lo, double hi, double res);
/// Argmin over a periodic grid on [-pi, pi).
double grid_argmin_angle(const std::function<double(double)>& f, double res);
/// Joint (angle, radius) search: a coarse 2-D grid, then repeated local
/// refinement down to `res` in both coordinates.
std::pair<double, double> grid_argmin_polar(const std::function<double(double, double)>& f,
                                            double r_lo, double r_hi, double res);

/// Distance between two angles on the circle.
double angle_distance(double a, double b);

/// F [c_x; c_y] - g, evaluated sample by sample from Bernstein polynomials
/// and the auxiliaries, in build_g's block order. One column per instance.
Eigen::MatrixXd scalar_constraint_residual(const BasisSet& basis, int num_obstacles,
                                           const AmState& s, const ProblemBatch& batch);
/// F^T r by explicit sums over samples.
Eigen::MatrixXd scalar_ft_times(const BasisSet& basis, int num_obstacles,
                                const Eigen::MatrixXd& r);

// --- random problems -------------------------------------------------------

/// Random boundary values, obstacles (constant velocity) and bounds.
ProblemBatch random_batch(const BatchSolver& solver, int l, std::mt19937_64& rng);
/// Perturbed straight-line coefficients and random auxiliaries/multipliers.
AmState random_state(const BatchSolver& solver, const ProblemBatch& batch, std::mt19937_64& rng);

/// Dense 4-lane scene with 10 vehicles around the ego and the default
/// planner configuration (l = 11, n = 100, m = 10).
struct CanonicalScene {
  PlannerConfig config;
  EgoState ego;
  std::vector<VehicleState> vehicles;
};
CanonicalScene canonical_dense_scene();

// --- suites ----------------------------------------------------------------

SuiteReport kkt_suite(int instances = 50, std::uint64_t seed = 11);
SuiteReport closed_form_suite(int instances = 1000, std::uint64_t seed = 12, double res = 1e-4);
SuiteReport batch_sequential_suite(int l = 11, int iterations = 150, std::uint64_t seed = 13);
SuiteReport residual_suite(std::uint64_t seed = 14);
SuiteReport basis_suite();
SuiteReport convergence_suite();

std::vector<std::string> suite_names();
/// Runs a named suite ("all" runs every suite). Throws std::invalid_argument
/// for an unknown name.
std::vector<SuiteReport> run_suite(const std::string& name);

}  // namespace batchopt::oracle
