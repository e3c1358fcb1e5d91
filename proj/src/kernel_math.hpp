#pragma once

// Scalar pieces shared by the serial and OpenMP kernel families.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "batchopt/kernels.hpp"

namespace batchopt::kernels::detail {

// Offset increment that removes a 2*pi jump between consecutive raw angles,
// with the same convention as numpy.unwrap (discontinuity threshold pi).
inline double unwrap_correction(double prev_raw, double raw) {
  constexpr double kPi = std::numbers::pi;
  const double dd = raw - prev_raw;
  double ddmod = std::fmod(dd + kPi, 2.0 * kPi);
  if (ddmod < 0.0) ddmod += 2.0 * kPi;
  ddmod -= kPi;
  if (ddmod == -kPi && dd > 0.0) ddmod = kPi;
  return std::abs(dd) < kPi ? 0.0 : ddmod - dd;
}

// Unconstrained least-squares line-of-sight ratio for a fixed angle.
inline double ratio_star(double dx, double dy, double a, double b, double alpha) {
  const double c = std::cos(alpha);
  const double s = std::sin(alpha);
  return (a * c * dx + b * s * dy) / (a * a * c * c + b * b * s * s);
}

// Fused angle/ratio update for one obstacle sample. cos and sin of the new
// angle come straight from the scaled offsets instead of through atan2, so
// the caller can reuse them for the targets and the residual.
struct ObstacleSample {
  double alpha, d, tx, ty, res_sq;
};

inline ObstacleSample obstacle_sample(double dx, double dy, double a, double b) {
  const double sy = a * dy;
  const double sx = b * dx;
  ObstacleSample o;
  double c = 1.0;
  double s = 0.0;
  if (std::abs(sx) <= kAngleZero && std::abs(sy) <= kAngleZero) {
    o.alpha = 0.0;
  } else {
    o.alpha = std::atan2(sy, sx);
    const double h = std::hypot(sx, sy);
    c = sx / h;
    s = sy / h;
  }
  o.d = std::max((a * c * dx + b * s * dy) / (a * a * c * c + b * b * s * s), 1.0);
  o.tx = a * o.d * c;
  o.ty = b * o.d * s;
  const double ex = dx - o.tx;
  const double ey = dy - o.ty;
  o.res_sq = ex * ex + ey * ey;
  return o;
}

}  // namespace batchopt::kernels::detail
