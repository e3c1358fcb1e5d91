#pragma once

// Batch non-holonomic trajectory optimizer.
//
// Solves l goal-directed trajectory problems that share obstacles, bounds and
// basis by alternating minimization over an augmented Lagrangian. The two
// coefficient blocks (x/y and heading) are equality-constrained QPs whose KKT
// matrices do not depend on the instance, so they are factorized once and
// every iteration back-substitutes all l right-hand sides at once. The
// remaining blocks (speed, line-of-sight angle and ratio, acceleration polar
// form) have elementwise closed forms evaluated by the kernels in
// kernels.hpp.

#include <Eigen/Dense>
#include <atomic>
#include <optional>
#include <stdexcept>
#include <vector>

#include "batchopt/basis.hpp"
#include "batchopt/kernels.hpp"

namespace batchopt {

/// Data of one solve: obstacles, bounds and per-instance boundary vectors.
struct ProblemBatch {
  /// Predicted obstacle centers, obstacle-major (row j*n + k), shared by all
  /// instances.
  Eigen::VectorXd xi_x;
  Eigen::VectorXd xi_y;
  double a = 5.6;
  double b = 3.1;
  double v_min = 0.1;
  double v_max = 30.0;
  double a_max = 4.0;
  /// Boundary values for [c_x; c_y], one column per instance. Row order is
  /// the x rows of ConstantMatrices::A_axis followed by the y rows.
  Eigen::MatrixXd b_xy;
  /// Heading boundary values, one column per instance.
  Eigen::MatrixXd b_psi;
  double rho_xy = 1.0;

  int size() const { return static_cast<int>(b_xy.cols()); }
};

/// All per-instance iterates. Coefficients and multipliers are (n_b x l);
/// time samples are (n x l); obstacle samples are (m*n x l).
struct AmState {
  Eigen::MatrixXd c_x, c_y, c_psi;
  Eigen::MatrixXd alpha, d;
  Eigen::MatrixXd alpha_a, d_a;
  Eigen::MatrixXd v;
  Eigen::MatrixXd lambda_x, lambda_y, lambda_psi;
  int iter = 0;

  int size() const { return static_cast<int>(c_x.cols()); }
  /// Picks instance columns (in the given order) into a new state.
  AmState columns(const std::vector<int>& idx) const;
  /// Overwrites column `dst` with column `src` of `other`.
  void set_column(int dst, const AmState& other, int src);
};

/// Per-instance L2 norms of the three blocks of F [c_x; c_y] - g.
struct Residuals {
  Eigen::VectorXd r_obs;
  Eigen::VectorXd r_acc;
  Eigen::VectorXd r_nonhol;

  double max_of(int instance) const;
  /// Max over instances and blocks.
  double max() const;
};

/// Trajectories sampled on the grid, one column per instance.
struct SampledTrajectories {
  Eigen::MatrixXd x, y, xd, yd, xdd, ydd;
  Eigen::MatrixXd psi, psid;
};

class SingularKkt : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factorized KKT matrices of the two QP blocks.
///
///   Q_xy  = [[blkdiag(Q, Q) + rho F^T F, A^T], [A, 0]]
///   Q_psi = [[Q + rho P^T P, A_psi^T], [A_psi, 0]]
class KktSystem {
 public:
  KktSystem(const BasisSet& basis, const ConstantMatrices& cm, double rho);

  double rho() const { return rho_; }
  const Eigen::MatrixXd& matrix_xy() const { return kkt_xy_; }
  const Eigen::MatrixXd& matrix_psi() const { return kkt_psi_; }
  /// Solves Q_xy X = rhs for every column of rhs.
  Eigen::MatrixXd solve_xy(const Eigen::MatrixXd& rhs) const;
  Eigen::MatrixXd solve_psi(const Eigen::MatrixXd& rhs) const;

  /// Process-wide count of KKT factorizations performed so far.
  static long factorization_count() { return factorizations_.load(); }

 private:
  double rho_;
  Eigen::MatrixXd kkt_xy_, kkt_psi_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_xy_, lu_psi_;
  Eigen::MatrixXd inv_xy_, inv_psi_;
  static inline std::atomic<long> factorizations_{0};
};

struct SolverOptions {
  int max_iter = 150;
  double tol = 1e-3;
  kernels::Backend backend = kernels::Backend::OpenMP;
  /// Zero the multipliers when init_state copies a warm start.
  bool reset_multipliers_on_warm_start = false;
};

struct SolveResult {
  AmState state;
  /// Residuals after each iteration.
  std::vector<Residuals> history;
  int iterations = 0;
  bool converged = false;
};

/// Optimizer for a fixed problem shape: basis, obstacle count and rho.
/// Construction builds the constant matrices and both factorizations;
/// everything after that is right-hand-side assembly and back-substitution.
/// Immutable after construction, so one instance can serve concurrent solves.
class BatchSolver {
 public:
  BatchSolver(BasisSet basis, int num_obstacles, double rho_xy, SolverOptions options = {});

  const BasisSet& basis() const { return basis_; }
  const ConstantMatrices& matrices() const { return cm_; }
  const KktSystem& kkt() const { return kkt_; }
  const SolverOptions& options() const { return options_; }
  int num_obstacles() const { return cm_.num_obstacles; }

  /// Throws std::invalid_argument if the batch does not match this shape.
  void validate(const ProblemBatch& batch) const;

  /// Cold start: straight line from start to goal fitted onto the basis,
  /// zero heading coefficients, speed clipped from the start speed,
  /// line-of-sight variables from the initial geometry, zero acceleration
  /// polar variables and multipliers. A warm start copies `warm` (multipliers
  /// reset only if the options ask for it).
  AmState init_state(const ProblemBatch& batch, const AmState* warm = nullptr) const;

  /// g stacked per instance: (2 * (m n + 2 n) x l) in the block order
  /// obstacle-x, acc-x, nonhol-x, obstacle-y, acc-y, nonhol-y.
  Eigen::MatrixXd build_g(const AmState& s, const ProblemBatch& batch) const;
  /// F^T g for every instance, without materializing g.
  Eigen::MatrixXd project_g(const AmState& s, const ProblemBatch& batch) const;

  void step_xy(AmState& s, const ProblemBatch& batch) const;
  void step_psi(AmState& s, const ProblemBatch& batch) const;
  void step_v(AmState& s, const ProblemBatch& batch) const;
  void step_alpha_obs(AmState& s, const ProblemBatch& batch) const;
  void step_d_obs(AmState& s, const ProblemBatch& batch) const;
  void step_alpha_acc(AmState& s, const ProblemBatch& batch) const;
  void step_d_acc(AmState& s, const ProblemBatch& batch) const;
  /// step_alpha_acc followed by step_d_acc, in one pass.
  void step_acc(AmState& s, const ProblemBatch& batch) const;
  void update_multipliers(AmState& s, const ProblemBatch& batch) const;
  Residuals compute_residuals(const AmState& s, const ProblemBatch& batch) const;

  /// Right-hand sides of both KKT systems for the current state.
  Eigen::MatrixXd rhs_xy(const AmState& s, const ProblemBatch& batch) const;
  Eigen::MatrixXd rhs_psi(const AmState& s, const ProblemBatch& batch) const;

  /// One full iteration: xy, psi, v, alpha, d, acc, multipliers. Returns the
  /// residuals of the updated state. Fuses the obstacle steps and skips
  /// recomputation that the step-by-step path below repeats.
  Residuals iterate(AmState& s, const ProblemBatch& batch) const;
  /// The same iteration as a plain sequence of the public step functions.
  void iterate_reference(AmState& s, const ProblemBatch& batch) const;

  /// Iterates until every instance's max residual is <= tol or max_iter.
  SolveResult solve(const ProblemBatch& batch, const AmState* warm = nullptr) const;
  SolveResult solve(const ProblemBatch& batch, const AmState* warm, int max_iter,
                    double tol) const;

  SampledTrajectories sample(const AmState& s) const;
  /// Unwrapped atan2(yd, xd) of the current x/y coefficients.
  Eigen::MatrixXd heading_targets(const AmState& s) const;

 private:
  // g is unchanged between the multiplier update and the next xy step, so
  // the loop carries F^T g from one iteration into the next.
  Residuals iterate_cached(AmState& s, const ProblemBatch& batch, Eigen::MatrixXd& ftg,
                           bool& ftg_valid) const;
  const kernels::KernelTable& k() const { return kernels::kernel_table(options_.backend); }

  BasisSet basis_;
  ConstantMatrices cm_;
  KktSystem kkt_;
  SolverOptions options_;
  Eigen::MatrixXd line_fit_;  // (P^T P)^-1 P^T
};

}  // namespace batchopt
