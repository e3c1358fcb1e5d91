#include "batchopt/basis.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace batchopt {

namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// B_{k,d}(tau); zero outside 0 <= k <= d.
double bernstein(int k, int d, double tau) {
  if (k < 0 || k > d) return 0.0;
  return binomial(d, k) * std::pow(tau, k) * std::pow(1.0 - tau, d - k);
}

}  // namespace

TimeGrid build_time_grid(double t0, double tf, int n) {
  if (n < 2) throw std::invalid_argument("time grid needs at least 2 samples");
  if (!(tf > t0)) throw std::invalid_argument("time grid needs tf > t0");
  return TimeGrid{t0, tf, n, (tf - t0) / (n - 1)};
}

Eigen::RowVectorXd BasisSet::row_at(double t, int derivative) const {
  const int d = degree;
  const double T = grid.horizon();
  const double tau = (t - grid.t0) / T;
  Eigen::RowVectorXd row(d + 1);
  for (int k = 0; k <= d; ++k) {
    switch (derivative) {
      case 0:
        row(k) = bernstein(k, d, tau);
        break;
      case 1:
        row(k) = d * (bernstein(k - 1, d - 1, tau) - bernstein(k, d - 1, tau)) / T;
        break;
      case 2:
        row(k) = d * (d - 1) *
                 (bernstein(k - 2, d - 2, tau) - 2.0 * bernstein(k - 1, d - 2, tau) +
                  bernstein(k, d - 2, tau)) /
                 (T * T);
        break;
      default:
        throw std::invalid_argument("derivative order must be 0, 1 or 2");
    }
  }
  return row;
}

BasisSet build_basis(const TimeGrid& grid, int degree) {
  if (degree < 3) {
    throw std::invalid_argument("basis degree must be >= 3, got " + std::to_string(degree));
  }
  BasisSet b;
  b.grid = grid;
  b.degree = degree;
  b.P.resize(grid.n, degree + 1);
  b.Pdot.resize(grid.n, degree + 1);
  b.Pddot.resize(grid.n, degree + 1);
  for (int k = 0; k < grid.n; ++k) {
    // Evaluate the last sample at exactly tf so the endpoint rows are exact.
    const double t = (k == grid.n - 1) ? grid.tf : grid.at(k);
    b.P.row(k) = b.row_at(t, 0);
    b.Pdot.row(k) = b.row_at(t, 1);
    b.Pddot.row(k) = b.row_at(t, 2);
  }
  return b;
}

int BoundarySpec::rows() const {
  return start_pos + start_vel + start_acc + end_pos + end_vel + end_acc;
}

Eigen::MatrixXd boundary_matrix(const BasisSet& basis, const BoundarySpec& spec) {
  Eigen::MatrixXd A(spec.rows(), basis.num_basis());
  const int last = basis.num_samples() - 1;
  int r = 0;
  if (spec.start_pos) A.row(r++) = basis.P.row(0);
  if (spec.start_vel) A.row(r++) = basis.Pdot.row(0);
  if (spec.start_acc) A.row(r++) = basis.Pddot.row(0);
  if (spec.end_pos) A.row(r++) = basis.P.row(last);
  if (spec.end_vel) A.row(r++) = basis.Pdot.row(last);
  if (spec.end_acc) A.row(r++) = basis.Pddot.row(last);
  return A;
}

ConstantMatrices build_constant_matrices(const BasisSet& basis, int num_obstacles,
                                         const BoundarySpec& xy_spec,
                                         const BoundarySpec& psi_spec) {
  if (num_obstacles < 0) throw std::invalid_argument("obstacle count must be >= 0");
  const int n = basis.num_samples();
  const int nb = basis.num_basis();
  const int m = num_obstacles;

  ConstantMatrices cm;
  cm.num_obstacles = m;
  cm.xy_spec = xy_spec;
  cm.psi_spec = psi_spec;

  cm.F_o.resize(static_cast<Eigen::Index>(m) * n, nb);
  for (int j = 0; j < m; ++j) cm.F_o.middleRows(static_cast<Eigen::Index>(j) * n, n) = basis.P;

  const Eigen::Index axis_rows = cm.F_o.rows() + 2 * n;
  cm.F_axis.resize(axis_rows, nb);
  cm.F_axis << cm.F_o, basis.Pddot, basis.Pdot;

  cm.F = Eigen::MatrixXd::Zero(2 * axis_rows, 2 * nb);
  cm.F.topLeftCorner(axis_rows, nb) = cm.F_axis;
  cm.F.bottomRightCorner(axis_rows, nb) = cm.F_axis;

  cm.Q = basis.Pddot.transpose() * basis.Pddot;
  cm.FtF_axis = m * (basis.P.transpose() * basis.P) + cm.Q +
                basis.Pdot.transpose() * basis.Pdot;
  // Gram products are symmetric only up to summation order; mirror the upper
  // triangle so they are exactly.
  cm.Q = Eigen::MatrixXd(cm.Q.selfadjointView<Eigen::Upper>());
  cm.FtF_axis = Eigen::MatrixXd(cm.FtF_axis.selfadjointView<Eigen::Upper>());

  cm.A_axis = boundary_matrix(basis, xy_spec);
  const Eigen::Index ra = cm.A_axis.rows();
  cm.A = Eigen::MatrixXd::Zero(2 * ra, 2 * nb);
  cm.A.topLeftCorner(ra, nb) = cm.A_axis;
  cm.A.bottomRightCorner(ra, nb) = cm.A_axis;

  cm.A_psi = boundary_matrix(basis, psi_spec);
  return cm;
}

}  // namespace batchopt
