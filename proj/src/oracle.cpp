#include "batchopt/oracle.hpp"

#include "batchopt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace batchopt::oracle {

namespace {

constexpr double kPi = std::numbers::pi;

// de Casteljau evaluation of a Bernstein-form polynomial.
double de_casteljau(std::vector<double> c, double tau) {
  for (std::size_t r = 1; r < c.size(); ++r)
    for (std::size_t i = 0; i + r < c.size(); ++i) c[i] = (1.0 - tau) * c[i] + tau * c[i + 1];
  return c.empty() ? 0.0 : c[0];
}

// Coefficients of d/dtau of a degree-(size-1) Bernstein polynomial.
std::vector<double> hodograph(const std::vector<double>& c) {
  const double deg = static_cast<double>(c.size()) - 1.0;
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) out.push_back(deg * (c[i + 1] - c[i]));
  return out;
}

struct OracleBasis {
  Eigen::MatrixXd P, Pd, Pdd;
  std::vector<double> t;
};

OracleBasis oracle_basis(const BasisSet& basis) {
  const int n = basis.num_samples();
  const int nb = basis.num_basis();
  const double T = basis.grid.horizon();
  OracleBasis o;
  o.P.resize(n, nb);
  o.Pd.resize(n, nb);
  o.Pdd.resize(n, nb);
  for (int k = 0; k < n; ++k) {
    const double t = k == n - 1 ? basis.grid.tf
                                : basis.grid.t0 + k * (basis.grid.tf - basis.grid.t0) / (n - 1);
    o.t.push_back(t);
    const double tau = (t - basis.grid.t0) / T;
    for (int i = 0; i < nb; ++i) {
      o.P(k, i) = bernstein(basis.degree, i, tau, 0, T);
      o.Pd(k, i) = bernstein(basis.degree, i, tau, 1, T);
      o.Pdd(k, i) = bernstein(basis.degree, i, tau, 2, T);
    }
  }
  return o;
}

// Boundary rows straight from the polynomial at tau = 0 and 1.
Eigen::MatrixXd oracle_boundary(const BasisSet& basis, const BoundarySpec& spec) {
  const double T = basis.grid.horizon();
  const bool flags[6] = {spec.start_pos, spec.start_vel, spec.start_acc,
                         spec.end_pos,   spec.end_vel,   spec.end_acc};
  Eigen::MatrixXd A(spec.rows(), basis.num_basis());
  int r = 0;
  for (int f = 0; f < 6; ++f) {
    if (!flags[f]) continue;
    const double tau = f < 3 ? 0.0 : 1.0;
    for (int i = 0; i < basis.num_basis(); ++i) A(r, i) = bernstein(basis.degree, i, tau, f % 3, T);
    ++r;
  }
  return A;
}

// Per-axis F = [P; ...; P (m times); Pdd; Pd].
Eigen::MatrixXd oracle_f_axis(const OracleBasis& o, int m) {
  const Eigen::Index n = o.P.rows();
  Eigen::MatrixXd F(m * n + 2 * n, o.P.cols());
  for (int j = 0; j < m; ++j) F.middleRows(j * n, n) = o.P;
  F.middleRows(m * n, n) = o.Pdd;
  F.middleRows(m * n + n, n) = o.Pd;
  return F;
}

// Unwrapped heading target, element by element.
Eigen::VectorXd unwrapped_heading(const Eigen::VectorXd& xd, const Eigen::VectorXd& yd) {
  Eigen::VectorXd th(xd.size());
  double offset = 0.0;
  double prev = 0.0;
  for (Eigen::Index k = 0; k < xd.size(); ++k) {
    const double raw = (xd(k) == 0.0 && yd(k) == 0.0) ? 0.0 : std::atan2(yd(k), xd(k));
    if (k > 0) {
      const double dd = raw - prev;
      if (std::abs(dd) >= kPi) {
        double ddmod = dd + kPi - 2.0 * kPi * std::floor((dd + kPi) / (2.0 * kPi)) - kPi;
        if (ddmod == -kPi && dd > 0.0) ddmod = kPi;
        offset += ddmod - dd;
      }
    }
    th(k) = raw + offset;
    prev = raw;
  }
  return th;
}

// Scalar g for one instance, recomputed from the auxiliaries.
Eigen::VectorXd scalar_g(const OracleBasis& o, int m, const AmState& s, int l,
                         const ProblemBatch& batch) {
  const Eigen::Index n = o.P.rows();
  const Eigen::Index axis = m * n + 2 * n;
  Eigen::VectorXd g(2 * axis);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index r = j * n + k;
      g(r) = batch.xi_x(r) + batch.a * s.d(r, l) * std::cos(s.alpha(r, l));
      g(axis + r) = batch.xi_y(r) + batch.b * s.d(r, l) * std::sin(s.alpha(r, l));
    }
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    double psi = 0.0;
    for (Eigen::Index i = 0; i < o.P.cols(); ++i) psi += o.P(k, i) * s.c_psi(i, l);
    g(m * n + k) = s.d_a(k, l) * std::cos(s.alpha_a(k, l));
    g(axis + m * n + k) = s.d_a(k, l) * std::sin(s.alpha_a(k, l));
    g(m * n + n + k) = s.v(k, l) * std::cos(psi);
    g(axis + m * n + n + k) = s.v(k, l) * std::sin(psi);
  }
  return g;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Instance `l` of a batch as a batch of one.
ProblemBatch single(const ProblemBatch& b, int l) {
  ProblemBatch s = b;
  s.b_xy = b.b_xy.col(l);
  s.b_psi = b.b_psi.col(l);
  return s;
}

double max_abs_diff(const AmState& a, const AmState& b, int la, int lb) {
  const Eigen::MatrixXd AmState::*fields[] = {
      &AmState::c_x,   &AmState::c_y,      &AmState::c_psi,    &AmState::alpha,
      &AmState::d,     &AmState::alpha_a,  &AmState::d_a,      &AmState::v,
      &AmState::lambda_x, &AmState::lambda_y, &AmState::lambda_psi};
  double m = 0.0;
  for (auto f : fields) m = std::max(m, ((a.*f).col(la) - (b.*f).col(lb)).cwiseAbs().maxCoeff());
  return m;
}

Check make_check(std::string name, double value, double bound, std::string detail = {}) {
  Check c;
  c.name = std::move(name);
  c.value = value;
  c.bound = bound;
  c.pass = std::isfinite(value) && value <= bound;
  c.detail = std::move(detail);
  return c;
}

BatchSolver default_solver(int m = 10) {
  return BatchSolver(build_basis(build_time_grid(0.0, 10.0, 100), 10), m, 1.0);
}

}  // namespace

bool SuiteReport::pass() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

double bernstein(int deg, int i, double tau, int order, double T) {
  if (i < 0 || i > deg) return 0.0;
  std::vector<double> c(static_cast<std::size_t>(deg) + 1, 0.0);
  c[static_cast<std::size_t>(i)] = 1.0;
  double scale = 1.0;
  for (int o = 0; o < order; ++o) {
    c = hodograph(c);
    scale /= T;
  }
  return scale * de_casteljau(c, tau);
}

EqQpSolution solve_equality_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& f,
                               const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const Eigen::Index nv = H.rows(), nc = A.rows();
  // A^T = Q [R; 0]: the first nc columns of Q span range(A^T), the rest its
  // null space.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A.transpose());
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(nv, nv);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(nc).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Y = Q.leftCols(nc);
  const Eigen::MatrixXd Z = Q.rightCols(nv - nc);
  // A Y = R^T, so x = Y z_y + Z z_z with R^T z_y = b.
  const Eigen::VectorXd zy = R.transpose().triangularView<Eigen::Lower>().solve(b);
  const Eigen::VectorXd xp = Y * zy;
  const Eigen::MatrixXd Zh = Z.transpose() * H * Z;
  const Eigen::VectorXd zz = Zh.ldlt().solve(Z.transpose() * (f - H * xp));
  EqQpSolution sol;
  sol.x = xp + Z * zz;
  // A^T mu = f - H x, projected on range(A^T): R mu = Y^T (f - H x).
  sol.mu = R.triangularView<Eigen::Upper>().solve(Y.transpose() * (f - H * sol.x));
  return sol;
}

double grid_argmin(const std::function<double(double)>& f, double lo, double hi, double res) {
  const long steps = static_cast<long>(std::floor((hi - lo) / res));
  double best_x = lo, best = f(lo);
  for (long i = 1; i <= steps + 1; ++i) {
    const double x = i > steps ? hi : lo + i * res;
    const double v = f(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  return best_x;
}

double grid_argmin_angle(const std::function<double(double)>& f, double res) {
  const long steps = static_cast<long>(std::ceil(2.0 * kPi / res));
  double best_x = -kPi, best = std::numeric_limits<double>::infinity();
  for (long i = 0; i < steps; ++i) {
    const double x = -kPi + i * res;
    const double v = f(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  return best_x;
}

std::pair<double, double> grid_argmin_polar(const std::function<double(double, double)>& f,
                                            double r_lo, double r_hi, double res) {
  double ha = 2.0 * kPi / 360.0;
  double hr = std::max((r_hi - r_lo) / 200.0, res);
  double ba = -kPi, br = r_lo, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 360; ++i)
    for (int j = 0; j <= 200; ++j) {
      const double a = -kPi + i * ha, r = std::min(r_lo + j * hr, r_hi);
      const double v = f(a, r);
      if (v < best) best = v, ba = a, br = r;
    }
  while (ha > res || hr > res) {
    const double ca = ba, cr = br;
    const double na = std::max(ha / 10.0, res), nr = std::max(hr / 10.0, res);
    const int sa = static_cast<int>(std::ceil(2.0 * ha / na));
    const int sr = static_cast<int>(std::ceil(2.0 * hr / nr));
    for (int i = -sa; i <= sa; ++i)
      for (int j = -sr; j <= sr; ++j) {
        const double a = ca + i * na;
        const double r = std::clamp(cr + j * nr, r_lo, r_hi);
        const double v = f(a, r);
        if (v < best) best = v, ba = a, br = r;
      }
    ha = na;
    hr = nr;
  }
  return {ba, br};
}

double angle_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 2.0 * kPi);
  return std::min(d, 2.0 * kPi - d);
}

Eigen::MatrixXd scalar_constraint_residual(const BasisSet& basis, int m, const AmState& s,
                                           const ProblemBatch& batch) {
  const OracleBasis o = oracle_basis(basis);
  const Eigen::Index n = o.P.rows(), nb = o.P.cols();
  const Eigen::Index axis = m * n + 2 * n;
  Eigen::MatrixXd r(2 * axis, s.size());
  for (int l = 0; l < s.size(); ++l) {
    const Eigen::VectorXd g = scalar_g(o, m, s, l, batch);
    for (Eigen::Index k = 0; k < n; ++k) {
      double x = 0, y = 0, xd = 0, yd = 0, xdd = 0, ydd = 0;
      for (Eigen::Index i = 0; i < nb; ++i) {
        x += o.P(k, i) * s.c_x(i, l);
        y += o.P(k, i) * s.c_y(i, l);
        xd += o.Pd(k, i) * s.c_x(i, l);
        yd += o.Pd(k, i) * s.c_y(i, l);
        xdd += o.Pdd(k, i) * s.c_x(i, l);
        ydd += o.Pdd(k, i) * s.c_y(i, l);
      }
      for (Eigen::Index j = 0; j < m; ++j) {
        r(j * n + k, l) = x - g(j * n + k);
        r(axis + j * n + k, l) = y - g(axis + j * n + k);
      }
      r(m * n + k, l) = xdd - g(m * n + k);
      r(axis + m * n + k, l) = ydd - g(axis + m * n + k);
      r(m * n + n + k, l) = xd - g(m * n + n + k);
      r(axis + m * n + n + k, l) = yd - g(axis + m * n + n + k);
    }
  }
  return r;
}

Eigen::MatrixXd scalar_ft_times(const BasisSet& basis, int m, const Eigen::MatrixXd& r) {
  const OracleBasis o = oracle_basis(basis);
  const Eigen::Index n = o.P.rows(), nb = o.P.cols();
  const Eigen::Index axis = m * n + 2 * n;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * nb, r.cols());
  for (Eigen::Index l = 0; l < r.cols(); ++l)
    for (int ax = 0; ax < 2; ++ax)
      for (Eigen::Index i = 0; i < nb; ++i) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          for (Eigen::Index j = 0; j < m; ++j) acc += o.P(k, i) * r(ax * axis + j * n + k, l);
          acc += o.Pdd(k, i) * r(ax * axis + m * n + k, l);
          acc += o.Pd(k, i) * r(ax * axis + m * n + n + k, l);
        }
        out(ax * nb + i, l) = acc;
      }
  return out;
}

ProblemBatch random_batch(const BatchSolver& solver, int l, std::mt19937_64& rng) {
  const int m = solver.num_obstacles();
  const int n = solver.basis().num_samples();
  const ConstantMatrices& cm = solver.matrices();
  ProblemBatch b;
  b.a = 5.6;
  b.b = 3.1;
  b.v_min = uniform(rng, 0.1, 3.0);
  b.v_max = uniform(rng, 12.0, 30.0);
  b.a_max = uniform(rng, 2.0, 8.0);
  b.rho_xy = solver.kkt().rho();
  b.xi_x.resize(m * n);
  b.xi_y.resize(m * n);
  for (int j = 0; j < m; ++j) {
    const double x0 = uniform(rng, -40.0, 150.0), y0 = uniform(rng, 0.0, 16.0);
    const double vx = uniform(rng, 0.0, 20.0), vy = uniform(rng, -0.5, 0.5);
    for (int k = 0; k < n; ++k) {
      const double t = solver.basis().grid.at(k) - solver.basis().grid.t0;
      b.xi_x(j * n + k) = x0 + vx * t;
      b.xi_y(j * n + k) = y0 + vy * t;
    }
  }
  const Eigen::Index ra = cm.A_axis.rows();
  b.b_xy.resize(2 * ra, l);
  b.b_psi.resize(cm.A_psi.rows(), l);
  const bool fx[6] = {cm.xy_spec.start_pos, cm.xy_spec.start_vel, cm.xy_spec.start_acc,
                      cm.xy_spec.end_pos,   cm.xy_spec.end_vel,   cm.xy_spec.end_acc};
  const bool fp[6] = {cm.psi_spec.start_pos, cm.psi_spec.start_vel, cm.psi_spec.start_acc,
                      cm.psi_spec.end_pos,   cm.psi_spec.end_vel,   cm.psi_spec.end_acc};
  for (int i = 0; i < l; ++i) {
    const double x0 = uniform(rng, -5.0, 5.0), y0 = uniform(rng, 1.0, 15.0);
    const double v0 = uniform(rng, 5.0, 20.0);
    const double xs[6] = {x0, v0, uniform(rng, -1.0, 1.0),
                          x0 + uniform(rng, 60.0, 200.0), uniform(rng, 5.0, 22.0), 0.0};
    const double ys[6] = {y0, uniform(rng, -1.0, 1.0), uniform(rng, -0.5, 0.5),
                          uniform(rng, 1.0, 15.0), 0.0, 0.0};
    const double ps[6] = {uniform(rng, -0.2, 0.2), uniform(rng, -0.1, 0.1), 0.0, 0.0, 0.0, 0.0};
    Eigen::Index r = 0;
    for (int f = 0; f < 6; ++f)
      if (fx[f]) {
        b.b_xy(r, i) = xs[f];
        b.b_xy(ra + r, i) = ys[f];
        ++r;
      }
    r = 0;
    for (int f = 0; f < 6; ++f)
      if (fp[f]) b.b_psi(r++, i) = ps[f];
  }
  return b;
}

AmState random_state(const BatchSolver& solver, const ProblemBatch& batch, std::mt19937_64& rng) {
  AmState s = solver.init_state(batch);
  auto fill = [&](Eigen::MatrixXd& mtx, double lo, double hi) {
    for (Eigen::Index i = 0; i < mtx.size(); ++i) mtx.data()[i] = uniform(rng, lo, hi);
  };
  Eigen::MatrixXd noise(s.c_x.rows(), s.c_x.cols());
  fill(noise, -6.0, 6.0);
  s.c_x += noise;
  fill(noise, -3.0, 3.0);
  s.c_y += noise;
  fill(s.c_psi, -0.3, 0.3);
  fill(s.alpha, -kPi, kPi);
  fill(s.d, 1.0, 3.0);
  fill(s.alpha_a, -kPi, kPi);
  fill(s.d_a, 0.0, batch.a_max);
  fill(s.v, batch.v_min, batch.v_max);
  fill(s.lambda_x, -2.0, 2.0);
  fill(s.lambda_y, -2.0, 2.0);
  fill(s.lambda_psi, -1.0, 1.0);
  return s;
}

CanonicalScene canonical_dense_scene() {
  const ScenarioConfig cfg = canonical_dense_config();
  CanonicalScene sc;
  sc.config = cfg.planner;
  sc.ego = initial_ego(cfg);
  sc.vehicles = build_world(cfg, *cfg.seed).states();
  return sc;
}

// ---------------------------------------------------------------------------

SuiteReport kkt_suite(int instances, std::uint64_t seed) {
  SuiteReport rep;
  rep.suite = "kkt";
  std::mt19937_64 rng(seed);
  const BatchSolver solver = default_solver();
  const BasisSet& basis = solver.basis();
  const int m = solver.num_obstacles();
  const OracleBasis o = oracle_basis(basis);
  const Eigen::Index nb = basis.num_basis();
  const Eigen::MatrixXd F = oracle_f_axis(o, m);
  const Eigen::MatrixXd Q = o.Pdd.transpose() * o.Pdd;
  const Eigen::MatrixXd Ax = oracle_boundary(basis, solver.matrices().xy_spec);
  const Eigen::MatrixXd Ap = oracle_boundary(basis, solver.matrices().psi_spec);

  const ProblemBatch batch = random_batch(solver, instances, rng);
  const AmState s0 = random_state(solver, batch, rng);
  const double rho = batch.rho_xy;

  // xy block: oracle matrices assembled from scratch.
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * nb, 2 * nb);
  H.topLeftCorner(nb, nb) = Q + rho * F.transpose() * F;
  H.bottomRightCorner(nb, nb) = Q + rho * F.transpose() * F;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * Ax.rows(), 2 * nb);
  A.topLeftCorner(Ax.rows(), nb) = Ax;
  A.bottomRightCorner(Ax.rows(), nb) = Ax;
  Eigen::MatrixXd K(2 * nb + A.rows(), 2 * nb + A.rows());
  K << H, A.transpose(), A, Eigen::MatrixXd::Zero(A.rows(), A.rows());

  AmState s = s0;
  solver.step_xy(s, batch);
  const Eigen::MatrixXd sol_xy = solver.kkt().solve_xy(solver.rhs_xy(s0, batch));
  double kkt_res = 0.0, eq_res = 0.0, rel = 0.0;
  const Eigen::Index axis = F.rows();
  for (int l = 0; l < instances; ++l) {
    const Eigen::VectorXd g = scalar_g(o, m, s0, l, batch);
    Eigen::VectorXd f(2 * nb);
    f.head(nb) = rho * F.transpose() * g.head(axis) + s0.lambda_x.col(l);
    f.tail(nb) = rho * F.transpose() * g.tail(axis) + s0.lambda_y.col(l);
    const EqQpSolution ref = solve_equality_qp(H, f, A, batch.b_xy.col(l));
    Eigen::VectorXd q(K.rows());
    q << f, batch.b_xy.col(l);
    kkt_res = std::max(kkt_res, (K * sol_xy.col(l) - q).cwiseAbs().maxCoeff());
    Eigen::VectorXd c(2 * nb);
    c << s.c_x.col(l), s.c_y.col(l);
    eq_res = std::max(eq_res, (A * c - batch.b_xy.col(l)).cwiseAbs().maxCoeff());
    rel = std::max(rel, (c - ref.x).cwiseAbs().maxCoeff() / std::max(1.0, ref.x.cwiseAbs().maxCoeff()));
  }
  rep.checks.push_back(make_check("step_xy KKT residual (inf-norm)", kkt_res, 1e-8));
  rep.checks.push_back(make_check("step_xy boundary rows", eq_res, 1e-8));
  rep.checks.push_back(make_check("step_xy vs null-space QP (max rel diff)", rel, 1e-10));

  // psi block.
  const Eigen::MatrixXd Hp = Q + rho * o.P.transpose() * o.P;
  Eigen::MatrixXd Kp(nb + Ap.rows(), nb + Ap.rows());
  Kp << Hp, Ap.transpose(), Ap, Eigen::MatrixXd::Zero(Ap.rows(), Ap.rows());
  AmState sp = s0;
  solver.step_psi(sp, batch);
  const Eigen::MatrixXd sol_psi = solver.kkt().solve_psi(solver.rhs_psi(s0, batch));
  kkt_res = eq_res = rel = 0.0;
  for (int l = 0; l < instances; ++l) {
    const Eigen::VectorXd theta = unwrapped_heading(o.Pd * s0.c_x.col(l), o.Pd * s0.c_y.col(l));
    const Eigen::VectorXd f = rho * o.P.transpose() * theta + s0.lambda_psi.col(l);
    const EqQpSolution ref = solve_equality_qp(Hp, f, Ap, batch.b_psi.col(l));
    Eigen::VectorXd q(Kp.rows());
    q << f, batch.b_psi.col(l);
    kkt_res = std::max(kkt_res, (Kp * sol_psi.col(l) - q).cwiseAbs().maxCoeff());
    eq_res = std::max(eq_res, (Ap * sp.c_psi.col(l) - batch.b_psi.col(l)).cwiseAbs().maxCoeff());
    rel = std::max(rel, (sp.c_psi.col(l) - ref.x).cwiseAbs().maxCoeff() /
                            std::max(1.0, ref.x.cwiseAbs().maxCoeff()));
  }
  rep.checks.push_back(make_check("step_psi KKT residual (inf-norm)", kkt_res, 1e-8));
  rep.checks.push_back(make_check("step_psi boundary rows", eq_res, 1e-8));
  rep.checks.push_back(make_check("step_psi vs null-space QP (max rel diff)", rel, 1e-10));
  return rep;
}

SuiteReport closed_form_suite(int instances, std::uint64_t seed, double res) {
  SuiteReport rep;
  rep.suite = "closed_forms";
  std::mt19937_64 rng(seed);
  const BatchSolver solver = default_solver();
  const BasisSet& basis = solver.basis();
  const int m = solver.num_obstacles();
  const int n = basis.num_samples();
  const OracleBasis o = oracle_basis(basis);
  const ProblemBatch batch = random_batch(solver, instances, rng);
  const AmState s0 = random_state(solver, batch, rng);

  // Pull some obstacles next to the instances' paths so that both the
  // clipped and the unclipped branch of d are exercised.
  ProblemBatch near = batch;
  {
    const Eigen::MatrixXd x = o.P * s0.c_x.col(0), y = o.P * s0.c_y.col(0);
    for (int j = 0; j < m / 2; ++j)
      for (int k = 0; k < n; ++k) {
        near.xi_x(j * n + k) = x(k) + uniform(rng, -8.0, 8.0);
        near.xi_y(j * n + k) = y(k) + uniform(rng, -4.0, 4.0);
      }
  }

  std::vector<int> ks(static_cast<std::size_t>(instances)), js(ks.size());
  for (int l = 0; l < instances; ++l) {
    ks[static_cast<std::size_t>(l)] = std::uniform_int_distribution<int>(0, n - 1)(rng);
    js[static_cast<std::size_t>(l)] = std::uniform_int_distribution<int>(0, m - 1)(rng);
  }
  auto sample = [&](const Eigen::MatrixXd& B, const Eigen::MatrixXd& c, int l, int k) {
    return B.row(k).dot(c.col(l));
  };

  // step_v: (xd - v cos th)^2 + (yd - v sin th)^2 over [v_min, v_max] with th
  // the direction of travel.
  {
    AmState s = s0;
    solver.step_v(s, batch);
    double worst = 0.0;
    long clipped = 0;
    for (int l = 0; l < instances; ++l) {
      const int k = ks[static_cast<std::size_t>(l)];
      const double xd = sample(o.Pd, s0.c_x, l, k), yd = sample(o.Pd, s0.c_y, l, k);
      const double th = std::atan2(yd, xd);
      auto f = [&](double v) {
        return std::pow(xd - v * std::cos(th), 2) + std::pow(yd - v * std::sin(th), 2);
      };
      const double vg = grid_argmin(f, batch.v_min, batch.v_max, res);
      worst = std::max(worst, std::abs(s.v(k, l) - vg));
      clipped += vg == batch.v_min || vg == batch.v_max;
    }
    rep.checks.push_back(make_check("step_v vs grid search", worst, res,
                                    std::to_string(clipped) + " clipped samples"));
  }

  // step_alpha_obs: (dx/a - cos al)^2 + (dy/b - sin al)^2, the line-of-sight
  // angle in the ellipse-normalized frame.
  AmState so = s0;
  solver.step_alpha_obs(so, near);
  {
    double worst = 0.0;
    for (int l = 0; l < instances; ++l) {
      const int k = ks[static_cast<std::size_t>(l)], j = js[static_cast<std::size_t>(l)];
      const double dx = sample(o.P, s0.c_x, l, k) - near.xi_x(j * n + k);
      const double dy = sample(o.P, s0.c_y, l, k) - near.xi_y(j * n + k);
      auto f = [&](double al) {
        return std::pow(dx / near.a - std::cos(al), 2) + std::pow(dy / near.b - std::sin(al), 2);
      };
      const double ag = grid_argmin_angle(f, res);
      worst = std::max(worst, angle_distance(so.alpha(j * n + k, l), ag));
    }
    rep.checks.push_back(make_check("step_alpha_obs vs grid search", worst, res));
  }

  // step_d_obs: (dx - a d cos al)^2 + (dy - b d sin al)^2 over d >= 1 with the
  // updated angle. The minimizer is below |(dx, dy)| / b, which bounds the grid.
  {
    AmState s = so;
    solver.step_d_obs(s, near);
    double worst = 0.0;
    long clipped = 0;
    for (int l = 0; l < instances; ++l) {
      const int k = ks[static_cast<std::size_t>(l)], j = js[static_cast<std::size_t>(l)];
      const double dx = sample(o.P, s0.c_x, l, k) - near.xi_x(j * n + k);
      const double dy = sample(o.P, s0.c_y, l, k) - near.xi_y(j * n + k);
      const double al = so.alpha(j * n + k, l);
      auto f = [&](double d) {
        return std::pow(dx - near.a * d * std::cos(al), 2) +
               std::pow(dy - near.b * d * std::sin(al), 2);
      };
      const double hi = std::max(1.0, std::hypot(dx, dy) / near.b) + res;
      const double dg = grid_argmin(f, 1.0, hi, res);
      worst = std::max(worst, std::abs(s.d(j * n + k, l) - dg));
      clipped += dg == 1.0;
    }
    rep.checks.push_back(make_check("step_d_obs vs grid search", worst, res,
                                    std::to_string(clipped) + " clipped samples"));
  }

  // Acceleration polar pair: (xdd - d cos al)^2 + (ydd - d sin al)^2.
  AmState sa = s0;
  solver.step_alpha_acc(sa, batch);
  AmState sd = sa;
  solver.step_d_acc(sd, batch);
  {
    double worst_a = 0.0, worst_d = 0.0, worst_ja = 0.0, worst_jd = 0.0;
    long clipped = 0;
    for (int l = 0; l < instances; ++l) {
      const int k = ks[static_cast<std::size_t>(l)];
      const double ax = sample(o.Pdd, s0.c_x, l, k), ay = sample(o.Pdd, s0.c_y, l, k);
      auto f2 = [&](double al, double d) {
        return std::pow(ax - d * std::cos(al), 2) + std::pow(ay - d * std::sin(al), 2);
      };
      // The angle is optimal for every positive radius; radius 1 is used.
      const double ag = grid_argmin_angle([&](double al) { return f2(al, 1.0); }, res);
      worst_a = std::max(worst_a, angle_distance(sa.alpha_a(k, l), ag));
      const double al = sa.alpha_a(k, l);
      const double dg = grid_argmin([&](double d) { return f2(al, d); }, 0.0, batch.a_max, res);
      worst_d = std::max(worst_d, std::abs(sd.d_a(k, l) - dg));
      clipped += dg == batch.a_max;
      const auto [ja, jd] = grid_argmin_polar(f2, 0.0, batch.a_max, res);
      worst_ja = std::max(worst_ja, angle_distance(sd.alpha_a(k, l), ja));
      worst_jd = std::max(worst_jd, std::abs(sd.d_a(k, l) - jd));
    }
    rep.checks.push_back(make_check("step_alpha_acc vs grid search", worst_a, res));
    rep.checks.push_back(make_check("step_d_acc vs grid search", worst_d, res,
                                    std::to_string(clipped) + " clipped samples"));
    rep.checks.push_back(make_check("step_alpha_acc, step_d_acc vs joint 2-D grid (angle)",
                                    worst_ja, res));
    rep.checks.push_back(make_check("step_alpha_acc, step_d_acc vs joint 2-D grid (radius)",
                                    worst_jd, res));
  }
  return rep;
}

SuiteReport batch_sequential_suite(int l, int iterations, std::uint64_t seed) {
  SuiteReport rep;
  rep.suite = "batch_sequential";
  std::mt19937_64 rng(seed);
  const BatchSolver solver = default_solver();
  const ProblemBatch batch = random_batch(solver, l, rng);
  AmState joint = solver.init_state(batch);
  std::vector<ProblemBatch> singles;
  std::vector<AmState> states;
  for (int i = 0; i < l; ++i) {
    singles.push_back(single(batch, i));
    states.push_back(solver.init_state(singles.back()));
  }
  double worst = 0.0;
  for (int i = 0; i < l; ++i) worst = std::max(worst, max_abs_diff(joint, states[static_cast<std::size_t>(i)], i, 0));
  for (int it = 0; it < iterations; ++it) {
    solver.iterate(joint, batch);
    for (int i = 0; i < l; ++i) {
      const auto u = static_cast<std::size_t>(i);
      solver.iterate(states[u], singles[u]);
      worst = std::max(worst, max_abs_diff(joint, states[u], i, 0));
    }
  }
  std::ostringstream os;
  os << l << " instances, " << iterations << " iterations";
  rep.checks.push_back(make_check("batch vs sequential single-instance iterates", worst, 1e-10, os.str()));
  return rep;
}

SuiteReport residual_suite(std::uint64_t seed) {
  SuiteReport rep;
  rep.suite = "residuals";
  std::mt19937_64 rng(seed);
  const BatchSolver solver = default_solver();
  const int m = solver.num_obstacles();
  const ProblemBatch batch = random_batch(solver, 7, rng);
  const AmState s = random_state(solver, batch, rng);
  const Eigen::MatrixXd r = scalar_constraint_residual(solver.basis(), m, s, batch);
  const double scale = std::max(1.0, r.cwiseAbs().maxCoeff());

  const Eigen::MatrixXd c = [&] {
    Eigen::MatrixXd out(2 * s.c_x.rows(), s.size());
    out << s.c_x, s.c_y;
    return out;
  }();
  const Eigen::MatrixXd r_solver = solver.matrices().F * c - solver.build_g(s, batch);
  rep.checks.push_back(make_check("F c - g vs scalar loop (rel)",
                                  (r_solver - r).cwiseAbs().maxCoeff() / scale, 1e-12));

  const Residuals res = solver.compute_residuals(s, batch);
  const Eigen::Index n = solver.basis().num_samples();
  const Eigen::Index axis = m * n + 2 * n;
  double worst = 0.0;
  for (int l = 0; l < s.size(); ++l) {
    auto block = [&](Eigen::Index off, Eigen::Index len) {
      return std::sqrt(r.col(l).segment(off, len).squaredNorm() +
                       r.col(l).segment(axis + off, len).squaredNorm());
    };
    const double ro = block(0, m * n), ra = block(m * n, n), rn = block(m * n + n, n);
    worst = std::max({worst, std::abs(res.r_obs(l) - ro) / std::max(1.0, ro),
                      std::abs(res.r_acc(l) - ra) / std::max(1.0, ra),
                      std::abs(res.r_nonhol(l) - rn) / std::max(1.0, rn)});
  }
  rep.checks.push_back(make_check("compute_residuals vs scalar loop (rel)", worst, 1e-12));

  // One multiplier update from zero: lambda = -rho F^T r.
  AmState z = s;
  z.lambda_x.setZero();
  z.lambda_y.setZero();
  z.lambda_psi.setZero();
  solver.update_multipliers(z, batch);
  const Eigen::MatrixXd expect = -batch.rho_xy * scalar_ft_times(solver.basis(), m, r);
  Eigen::MatrixXd got(expect.rows(), expect.cols());
  got << z.lambda_x, z.lambda_y;
  const double lscale = std::max(1.0, expect.cwiseAbs().maxCoeff());
  rep.checks.push_back(make_check("lambda_xy update vs scalar loop (rel)",
                                  (got - expect).cwiseAbs().maxCoeff() / lscale, 1e-12));

  const OracleBasis o = oracle_basis(solver.basis());
  double wpsi = 0.0;
  for (int l = 0; l < s.size(); ++l) {
    const Eigen::VectorXd th = unwrapped_heading(o.Pd * s.c_x.col(l), o.Pd * s.c_y.col(l));
    Eigen::VectorXd e(o.P.cols());
    for (Eigen::Index i = 0; i < o.P.cols(); ++i) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < n; ++k)
        acc += o.P(k, i) * (o.P.row(k).dot(s.c_psi.col(l)) - th(k));
      e(i) = -batch.rho_xy * acc;
    }
    wpsi = std::max(wpsi, (z.lambda_psi.col(l) - e).cwiseAbs().maxCoeff() /
                              std::max(1.0, e.cwiseAbs().maxCoeff()));
  }
  rep.checks.push_back(make_check("lambda_psi update vs scalar loop (rel)", wpsi, 1e-12));
  return rep;
}

SuiteReport basis_suite() {
  SuiteReport rep;
  rep.suite = "basis";
  const BasisSet basis = build_basis(build_time_grid(0.0, 10.0, 100), 10);
  const OracleBasis o = oracle_basis(basis);
  rep.checks.push_back(make_check("P vs de Casteljau", (basis.P - o.P).cwiseAbs().maxCoeff(), 1e-12));
  rep.checks.push_back(make_check("Pdot vs hodograph", (basis.Pdot - o.Pd).cwiseAbs().maxCoeff(), 1e-12));
  rep.checks.push_back(make_check("Pddot vs hodograph", (basis.Pddot - o.Pdd).cwiseAbs().maxCoeff(), 1e-12));
  rep.checks.push_back(make_check(
      "partition of unity", (basis.P.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12));

  // Central differences of the position rows against the derivative rows.
  double worst1 = 0.0, worst2 = 0.0;
  const double h = 1e-4;
  for (int k = 1; k + 1 < basis.num_samples(); ++k) {
    const double t = basis.grid.at(k);
    const Eigen::RowVectorXd p = basis.row_at(t, 0), pp = basis.row_at(t + h, 0),
                             pm = basis.row_at(t - h, 0);
    worst1 = std::max(worst1, ((pp - pm) / (2 * h) - basis.Pdot.row(k)).cwiseAbs().maxCoeff());
    worst2 = std::max(worst2, ((pp - 2 * p + pm) / (h * h) - basis.Pddot.row(k)).cwiseAbs().maxCoeff());
  }
  rep.checks.push_back(make_check("Pdot vs finite differences", worst1, 1e-7));
  rep.checks.push_back(make_check("Pddot vs finite differences", worst2, 1e-5));
  return rep;
}

SuiteReport convergence_suite() {
  SuiteReport rep;
  rep.suite = "convergence";
  CanonicalScene sc = canonical_dense_scene();
  const auto t0 = std::chrono::steady_clock::now();
  Planner planner(sc.config);
  const CycleResult r = planner.cycle(sc.ego, sc.vehicles);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double final_res = std::numeric_limits<double>::infinity();
  std::ostringstream os;
  if (r.plan.best_index && !r.plan.best_history.empty()) {
    const auto& h = r.plan.best_history.back();
    final_res = std::max({h[0], h[1], h[2]});
    os << "best candidate " << *r.plan.best_index << " after " << r.plan.iterations
       << " iterations: r_obs " << h[0] << ", r_acc " << h[1] << ", r_nonhol " << h[2];
  } else {
    os << "no feasible candidate";
  }
  rep.checks.push_back(make_check("canonical dense scene best-candidate residual", final_res,
                                  sc.config.limits.residual_tol, os.str()));
  rep.checks.push_back(make_check("iterations used", r.plan.iterations, 150));
  rep.checks.push_back(make_check("runtime of the check (s)", secs, 10.0));
  return rep;
}

std::vector<std::string> suite_names() {
  return {"basis", "residuals", "kkt", "closed_forms", "batch_sequential", "convergence"};
}

std::vector<SuiteReport> run_suite(const std::string& name) {
  std::vector<SuiteReport> out;
  auto one = [&](const std::string& s) {
    if (s == "basis") out.push_back(basis_suite());
    else if (s == "residuals") out.push_back(residual_suite());
    else if (s == "kkt") out.push_back(kkt_suite());
    else if (s == "closed_forms") out.push_back(closed_form_suite());
    else if (s == "batch_sequential") out.push_back(batch_sequential_suite());
    else if (s == "convergence") out.push_back(convergence_suite());
    else throw std::invalid_argument("unknown oracle suite: " + s);
  };
  if (name == "all") {
    for (const std::string& s : suite_names()) one(s);
  } else {
    one(name);
  }
  return out;
}

}  // namespace batchopt::oracle
