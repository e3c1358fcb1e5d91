#pragma once

// Elementwise and per-instance kernels of the alternating-minimization loop.
//
// Every kernel exists twice with the same signature: `serial::` is the
// reference implementation used by the tests, `omp::` distributes the outer
// loop (batch instances, then obstacles) over OpenMP threads. Each output
// element is computed by the same arithmetic in both variants, so their
// results are bitwise identical.
//
// Matrix layout: one column per batch instance. Per-time quantities are
// (n x l); per-obstacle quantities are (m*n x l), obstacle-major, so row
// j*n + k is obstacle j at time sample k.

#include <cmath>

#include <Eigen/Dense>

namespace batchopt::kernels {

enum class Backend { Serial, OpenMP };

/// Components at or below this magnitude count as zero for angle purposes.
/// Boundary conditions pin some samples (e.g. the final acceleration) to
/// zero, and the roundoff left there would otherwise pick an arbitrary angle
/// that depends on the summation order of the matrix products.
inline constexpr double kAngleZero = 1e-9;

/// atan2 returning 0 when both arguments are (numerically) zero.
inline double safe_atan2(double y, double x) {
  if (std::abs(y) <= kAngleZero && std::abs(x) <= kAngleZero) return 0.0;
  return std::atan2(y, x);
}

/// Geometry of the obstacle ellipses shared by every kernel.
struct Ellipse {
  double a = 0.0;
  double b = 0.0;
};

#define BATCHOPT_KERNEL_DECLS                                                          \
  void heading_targets(const Eigen::MatrixXd& xd, const Eigen::MatrixXd& yd,          \
                       Eigen::MatrixXd& theta);                                       \
  void clip_speed(const Eigen::MatrixXd& xd, const Eigen::MatrixXd& yd, double v_min, \
                  double v_max, Eigen::MatrixXd& v);                                  \
  void obstacle_angles(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,            \
                       const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y,      \
                       Ellipse e, Eigen::MatrixXd& alpha);                            \
  void obstacle_ratios(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,            \
                       const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y,      \
                       Ellipse e, const Eigen::MatrixXd& alpha, Eigen::MatrixXd& d);  \
  void accel_polar(const Eigen::MatrixXd& xdd, const Eigen::MatrixXd& ydd,            \
                   double a_max, Eigen::MatrixXd& alpha_a, Eigen::MatrixXd& d_a);     \
  void sum_obstacle_targets(const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y, \
                            Ellipse e, const Eigen::MatrixXd& alpha,                  \
                            const Eigen::MatrixXd& d, int n, Eigen::MatrixXd& sum_x,  \
                            Eigen::MatrixXd& sum_y);                                  \
  void polar_targets(const Eigen::MatrixXd& r, const Eigen::MatrixXd& angle,          \
                     Eigen::MatrixXd& tx, Eigen::MatrixXd& ty);                       \
  void block_norms(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,                \
                   const Eigen::MatrixXd& xd, const Eigen::MatrixXd& yd,              \
                   const Eigen::MatrixXd& xdd, const Eigen::MatrixXd& ydd,            \
                   const Eigen::MatrixXd& psi, const Eigen::VectorXd& xi_x,           \
                   const Eigen::VectorXd& xi_y, Ellipse e, const Eigen::MatrixXd& alpha, \
                   const Eigen::MatrixXd& d, const Eigen::MatrixXd& alpha_a,          \
                   const Eigen::MatrixXd& d_a, const Eigen::MatrixXd& v,              \
                   Eigen::VectorXd& r_obs, Eigen::VectorXd& r_acc,                    \
                   Eigen::VectorXd& r_nonhol);                                    \
  void obstacle_update(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,            \
                       const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y,      \
                       Ellipse e, Eigen::MatrixXd& alpha, Eigen::MatrixXd& d,         \
                       Eigen::MatrixXd& sum_x, Eigen::MatrixXd& sum_y,                \
                       Eigen::VectorXd& r_obs_sq);

// heading_targets  theta = unwrap(atan2(yd, xd)) column by column.
// clip_speed       v = clip(hypot(xd, yd), v_min, v_max).
// obstacle_angles  alpha = atan2(a (y - xi_y), b (x - xi_x)).
// obstacle_ratios  d = max(d*, 1), d* the least-squares ratio for fixed alpha.
// accel_polar      alpha_a = atan2(ydd, xdd), d_a = min(hypot(xdd, ydd), a_max).
// sum_obstacle_targets
//                  sum over obstacles of xi + a d cos(alpha) (resp. b sin),
//                  i.e. F_o^T g_obs = P^T sum_x.
// polar_targets    tx = r cos(angle), ty = r sin(angle).
// block_norms      L2 norms of the obstacle, acceleration and non-holonomic
//                  blocks of F [c_x; c_y] - g, per instance.
// obstacle_update  obstacle_angles + obstacle_ratios in one pass, also
//                  returning sum_obstacle_targets of the new values and the
//                  squared obstacle residual per instance.
namespace serial {
BATCHOPT_KERNEL_DECLS
}  // namespace serial

namespace omp {
BATCHOPT_KERNEL_DECLS
}  // namespace omp

#undef BATCHOPT_KERNEL_DECLS

/// Function table for one backend; lets the solver pick a kernel family at
/// run time without branching in every call site.
struct KernelTable {
  decltype(&serial::heading_targets) heading_targets;
  decltype(&serial::clip_speed) clip_speed;
  decltype(&serial::obstacle_angles) obstacle_angles;
  decltype(&serial::obstacle_ratios) obstacle_ratios;
  decltype(&serial::accel_polar) accel_polar;
  decltype(&serial::sum_obstacle_targets) sum_obstacle_targets;
  decltype(&serial::polar_targets) polar_targets;
  decltype(&serial::block_norms) block_norms;
  decltype(&serial::obstacle_update) obstacle_update;
};

const KernelTable& kernel_table(Backend backend);

/// Number of OpenMP worker threads the `omp::` kernels will use.
int omp_threads();

}  // namespace batchopt::kernels
