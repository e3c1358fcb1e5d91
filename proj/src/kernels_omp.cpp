#include <omp.h>

#include <algorithm>
#include <cmath>

#include "batchopt/kernels.hpp"
#include "kernel_math.hpp"

namespace batchopt::kernels {

int omp_threads() { return omp_get_max_threads(); }

namespace omp {

// Same arithmetic as serial::, loop order inside each instance preserved so
// reductions accumulate in the same sequence.

void heading_targets(const Eigen::MatrixXd& xd, const Eigen::MatrixXd& yd,
                     Eigen::MatrixXd& theta) {
  theta.resize(xd.rows(), xd.cols());
  const Eigen::Index L = xd.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index l = 0; l < L; ++l) {
    double offset = 0.0;
    double prev_raw = 0.0;
    for (Eigen::Index k = 0; k < xd.rows(); ++k) {
      const double raw = safe_atan2(yd(k, l), xd(k, l));
      if (k > 0) offset += detail::unwrap_correction(prev_raw, raw);
      prev_raw = raw;
      theta(k, l) = raw + offset;
    }
  }
}

void clip_speed(const Eigen::MatrixXd& xd, const Eigen::MatrixXd& yd, double v_min,
                double v_max, Eigen::MatrixXd& v) {
  v.resize(xd.rows(), xd.cols());
  const Eigen::Index L = xd.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index k = 0; k < xd.rows(); ++k)
      v(k, l) = std::clamp(std::hypot(xd(k, l), yd(k, l)), v_min, v_max);
}

void obstacle_angles(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                     const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y, Ellipse e,
                     Eigen::MatrixXd& alpha) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = n > 0 ? xi_x.size() / n : 0;
  const Eigen::Index L = x.cols();
  alpha.resize(m * n, L);
#pragma omp parallel for collapse(2) schedule(static)
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index r = j * n + k;
        alpha(r, l) = safe_atan2(e.a * (y(k, l) - xi_y(r)), e.b * (x(k, l) - xi_x(r)));
      }
}

void obstacle_ratios(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                     const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y, Ellipse e,
                     const Eigen::MatrixXd& alpha, Eigen::MatrixXd& d) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = n > 0 ? xi_x.size() / n : 0;
  const Eigen::Index L = x.cols();
  d.resize(m * n, L);
#pragma omp parallel for collapse(2) schedule(static)
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index r = j * n + k;
        d(r, l) = std::max(
            detail::ratio_star(x(k, l) - xi_x(r), y(k, l) - xi_y(r), e.a, e.b, alpha(r, l)),
            1.0);
      }
}

void accel_polar(const Eigen::MatrixXd& xdd, const Eigen::MatrixXd& ydd, double a_max,
                 Eigen::MatrixXd& alpha_a, Eigen::MatrixXd& d_a) {
  alpha_a.resize(xdd.rows(), xdd.cols());
  d_a.resize(xdd.rows(), xdd.cols());
  const Eigen::Index L = xdd.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index k = 0; k < xdd.rows(); ++k) {
      alpha_a(k, l) = safe_atan2(ydd(k, l), xdd(k, l));
      d_a(k, l) = std::min(std::hypot(xdd(k, l), ydd(k, l)), a_max);
    }
}

void sum_obstacle_targets(const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y,
                          Ellipse e, const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& d,
                          int n, Eigen::MatrixXd& sum_x, Eigen::MatrixXd& sum_y) {
  const Eigen::Index m = n > 0 ? xi_x.size() / n : 0;
  const Eigen::Index L = alpha.cols();
  sum_x = Eigen::MatrixXd::Zero(n, L);
  sum_y = Eigen::MatrixXd::Zero(n, L);
#pragma omp parallel for schedule(static)
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index r = j * n + k;
        sum_x(k, l) += xi_x(r) + e.a * d(r, l) * std::cos(alpha(r, l));
        sum_y(k, l) += xi_y(r) + e.b * d(r, l) * std::sin(alpha(r, l));
      }
}

void polar_targets(const Eigen::MatrixXd& r, const Eigen::MatrixXd& angle,
                   Eigen::MatrixXd& tx, Eigen::MatrixXd& ty) {
  tx.resize(r.rows(), r.cols());
  ty.resize(r.rows(), r.cols());
  const Eigen::Index L = r.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index k = 0; k < r.rows(); ++k) {
      tx(k, l) = r(k, l) * std::cos(angle(k, l));
      ty(k, l) = r(k, l) * std::sin(angle(k, l));
    }
}

void block_norms(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                 const Eigen::MatrixXd& xd, const Eigen::MatrixXd& yd,
                 const Eigen::MatrixXd& xdd, const Eigen::MatrixXd& ydd,
                 const Eigen::MatrixXd& psi, const Eigen::VectorXd& xi_x,
                 const Eigen::VectorXd& xi_y, Ellipse e, const Eigen::MatrixXd& alpha,
                 const Eigen::MatrixXd& d, const Eigen::MatrixXd& alpha_a,
                 const Eigen::MatrixXd& d_a, const Eigen::MatrixXd& v,
                 Eigen::VectorXd& r_obs, Eigen::VectorXd& r_acc, Eigen::VectorXd& r_nonhol) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = n > 0 ? xi_x.size() / n : 0;
  const Eigen::Index L = x.cols();
  r_obs.resize(L);
  r_acc.resize(L);
  r_nonhol.resize(L);
#pragma omp parallel for schedule(static)
  for (Eigen::Index l = 0; l < L; ++l) {
    double so = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index r = j * n + k;
        const double ex = x(k, l) - xi_x(r) - e.a * d(r, l) * std::cos(alpha(r, l));
        const double ey = y(k, l) - xi_y(r) - e.b * d(r, l) * std::sin(alpha(r, l));
        so += ex * ex + ey * ey;
      }
    double sa = 0.0;
    double sn = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double ax = xdd(k, l) - d_a(k, l) * std::cos(alpha_a(k, l));
      const double ay = ydd(k, l) - d_a(k, l) * std::sin(alpha_a(k, l));
      sa += ax * ax + ay * ay;
      const double nx = xd(k, l) - v(k, l) * std::cos(psi(k, l));
      const double ny = yd(k, l) - v(k, l) * std::sin(psi(k, l));
      sn += nx * nx + ny * ny;
    }
    r_obs(l) = std::sqrt(so);
    r_acc(l) = std::sqrt(sa);
    r_nonhol(l) = std::sqrt(sn);
  }
}

void obstacle_update(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                     const Eigen::VectorXd& xi_x, const Eigen::VectorXd& xi_y, Ellipse e,
                     Eigen::MatrixXd& alpha, Eigen::MatrixXd& d, Eigen::MatrixXd& sum_x,
                     Eigen::MatrixXd& sum_y, Eigen::VectorXd& r_obs_sq) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = n > 0 ? xi_x.size() / n : 0;
  const Eigen::Index L = x.cols();
  alpha.resize(m * n, L);
  d.resize(m * n, L);
  sum_x = Eigen::MatrixXd::Zero(n, L);
  sum_y = Eigen::MatrixXd::Zero(n, L);
  r_obs_sq.resize(L);
#pragma omp parallel for schedule(static)
  for (Eigen::Index l = 0; l < L; ++l) {
    double so = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index r = j * n + k;
        const auto o =
            detail::obstacle_sample(x(k, l) - xi_x(r), y(k, l) - xi_y(r), e.a, e.b);
        alpha(r, l) = o.alpha;
        d(r, l) = o.d;
        sum_x(k, l) += xi_x(r) + o.tx;
        sum_y(k, l) += xi_y(r) + o.ty;
        so += o.res_sq;
      }
    r_obs_sq(l) = so;
  }
}

}  // namespace omp
}  // namespace batchopt::kernels
