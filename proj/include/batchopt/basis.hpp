#pragma once

#include <Eigen/Dense>

namespace batchopt {

/// Uniform sampling of the planning horizon [t0, tf].
struct TimeGrid {
  double t0 = 0.0;
  double tf = 0.0;
  int n = 0;
  double dt = 0.0;

  double at(int k) const { return t0 + dt * k; }
  double horizon() const { return tf - t0; }
};

/// Throws std::invalid_argument unless tf > t0 and n >= 2.
TimeGrid build_time_grid(double t0, double tf, int n);

/// Bernstein basis of a fixed degree on [t0, tf], sampled on a grid.
///
/// Row k of `P` holds the basis values at grid time k; `Pdot` and `Pddot`
/// hold the first and second time derivatives (already scaled by the
/// horizon length, so `Pdot * c` is a velocity in m/s).
struct BasisSet {
  TimeGrid grid;
  int degree = 0;
  Eigen::MatrixXd P;
  Eigen::MatrixXd Pdot;
  Eigen::MatrixXd Pddot;

  int num_basis() const { return degree + 1; }
  int num_samples() const { return grid.n; }

  /// Basis row (derivative order 0, 1 or 2) at an arbitrary time. Times
  /// outside the horizon extrapolate the polynomial.
  Eigen::RowVectorXd row_at(double t, int derivative = 0) const;
};

/// Throws std::invalid_argument for degree < 3.
BasisSet build_basis(const TimeGrid& grid, int degree);

/// Per-axis rows of the boundary-condition matrix. Each flag selects the
/// corresponding derivative constraint at the start or the end of the
/// horizon. The defaults fix position, velocity and acceleration at both
/// ends for x/y, and heading plus heading rate at both ends for psi.
struct BoundarySpec {
  bool start_pos = true, start_vel = true, start_acc = true;
  bool end_pos = true, end_vel = true, end_acc = true;

  static BoundarySpec xy_default() { return {}; }
  static BoundarySpec heading_default() {
    return {true, true, false, true, true, false};
  }
  int rows() const;
};

/// Matrices shared by every instance of a batch. None depends on the batch
/// index; they are built once per (grid, degree, obstacle count).
struct ConstantMatrices {
  int num_obstacles = 0;
  /// P stacked vertically once per obstacle, obstacle-major.
  Eigen::MatrixXd F_o;
  /// Per-axis block [F_o; Pddot; Pdot].
  Eigen::MatrixXd F_axis;
  /// blkdiag(F_axis, F_axis).
  Eigen::MatrixXd F;
  /// Pddot^T Pddot.
  Eigen::MatrixXd Q;
  /// F_axis^T F_axis = m P^T P + Pddot^T Pddot + Pdot^T Pdot.
  Eigen::MatrixXd FtF_axis;
  /// blkdiag(A_axis, A_axis) acting on [c_x; c_y].
  Eigen::MatrixXd A;
  Eigen::MatrixXd A_axis;
  Eigen::MatrixXd A_psi;
  BoundarySpec xy_spec;
  BoundarySpec psi_spec;

  /// Row counts of the per-axis blocks of F.
  int obstacle_rows() const { return static_cast<int>(F_o.rows()); }
  int axis_rows() const { return static_cast<int>(F_axis.rows()); }
};

/// Rows of P/Pdot/Pddot at t0 and tf selected by `spec`, in the order
/// start pos, start vel, start acc, end pos, end vel, end acc.
Eigen::MatrixXd boundary_matrix(const BasisSet& basis, const BoundarySpec& spec);

ConstantMatrices build_constant_matrices(
    const BasisSet& basis, int num_obstacles,
    const BoundarySpec& xy_spec = BoundarySpec::xy_default(),
    const BoundarySpec& psi_spec = BoundarySpec::heading_default());

}  // namespace batchopt
