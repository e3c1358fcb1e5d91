#include "batchopt/batch_solver.hpp"

#include <algorithm>
#include <string>

namespace batchopt {

namespace {

Eigen::MatrixXd pick_columns(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(idx[i]);
  return out;
}

void require_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                   const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(std::string("shape mismatch for ") + what + ": got " +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                ", expected " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
}

// Row of the boundary vector holding the given constraint for one axis.
int boundary_row(const BoundarySpec& spec, int which) {
  const bool flags[6] = {spec.start_pos, spec.start_vel, spec.start_acc,
                         spec.end_pos,   spec.end_vel,   spec.end_acc};
  if (!flags[which]) return -1;
  int r = 0;
  for (int i = 0; i < which; ++i) r += flags[i];
  return r;
}

}  // namespace

AmState AmState::columns(const std::vector<int>& idx) const {
  AmState out;
  out.c_x = pick_columns(c_x, idx);
  out.c_y = pick_columns(c_y, idx);
  out.c_psi = pick_columns(c_psi, idx);
  out.alpha = pick_columns(alpha, idx);
  out.d = pick_columns(d, idx);
  out.alpha_a = pick_columns(alpha_a, idx);
  out.d_a = pick_columns(d_a, idx);
  out.v = pick_columns(v, idx);
  out.lambda_x = pick_columns(lambda_x, idx);
  out.lambda_y = pick_columns(lambda_y, idx);
  out.lambda_psi = pick_columns(lambda_psi, idx);
  out.iter = iter;
  return out;
}

void AmState::set_column(int dst, const AmState& o, int src) {
  c_x.col(dst) = o.c_x.col(src);
  c_y.col(dst) = o.c_y.col(src);
  c_psi.col(dst) = o.c_psi.col(src);
  alpha.col(dst) = o.alpha.col(src);
  d.col(dst) = o.d.col(src);
  alpha_a.col(dst) = o.alpha_a.col(src);
  d_a.col(dst) = o.d_a.col(src);
  v.col(dst) = o.v.col(src);
  lambda_x.col(dst) = o.lambda_x.col(src);
  lambda_y.col(dst) = o.lambda_y.col(src);
  lambda_psi.col(dst) = o.lambda_psi.col(src);
}

double Residuals::max_of(int l) const {
  return std::max({r_obs(l), r_acc(l), r_nonhol(l)});
}

double Residuals::max() const {
  double m = 0.0;
  for (Eigen::Index l = 0; l < r_obs.size(); ++l) m = std::max(m, max_of(static_cast<int>(l)));
  return m;
}

// ---------------------------------------------------------------------------

KktSystem::KktSystem(const BasisSet& basis, const ConstantMatrices& cm, double rho)
    : rho_(rho) {
  const Eigen::Index nb = basis.num_basis();
  const Eigen::Index ra = cm.A.rows();
  kkt_xy_ = Eigen::MatrixXd::Zero(2 * nb + ra, 2 * nb + ra);
  kkt_xy_.topLeftCorner(nb, nb) = cm.Q + rho * cm.FtF_axis;
  kkt_xy_.block(nb, nb, nb, nb) = cm.Q + rho * cm.FtF_axis;
  kkt_xy_.topRightCorner(2 * nb, ra) = cm.A.transpose();
  kkt_xy_.bottomLeftCorner(ra, 2 * nb) = cm.A;

  const Eigen::Index rp = cm.A_psi.rows();
  kkt_psi_ = Eigen::MatrixXd::Zero(nb + rp, nb + rp);
  kkt_psi_.topLeftCorner(nb, nb) = cm.Q + rho * basis.P.transpose() * basis.P;
  kkt_psi_.topRightCorner(nb, rp) = cm.A_psi.transpose();
  kkt_psi_.bottomLeftCorner(rp, nb) = cm.A_psi;

  lu_xy_.compute(kkt_xy_);
  lu_psi_.compute(kkt_psi_);
  factorizations_ += 2;

  // PartialPivLU does not report singularity; a vanishing pivot shows up as
  // a tiny reciprocal condition estimate.
  if (!(lu_xy_.rcond() > 1e-14)) throw SingularKkt("xy KKT matrix is singular");
  if (!(lu_psi_.rcond() > 1e-14)) throw SingularKkt("heading KKT matrix is singular");
  inv_xy_ = lu_xy_.inverse();
  inv_psi_ = lu_psi_.inverse();
}

// Applying the inverse as a coefficient-based product keeps every column's
// arithmetic independent of how many columns are solved together; the
// blocked multi-RHS triangular solves round differently for one column than
// for many.
Eigen::MatrixXd KktSystem::solve_xy(const Eigen::MatrixXd& rhs) const {
  return inv_xy_.lazyProduct(rhs);
}

Eigen::MatrixXd KktSystem::solve_psi(const Eigen::MatrixXd& rhs) const {
  return inv_psi_.lazyProduct(rhs);
}

// ---------------------------------------------------------------------------

BatchSolver::BatchSolver(BasisSet basis, int num_obstacles, double rho_xy,
                         SolverOptions options)
    : basis_(std::move(basis)),
      cm_(build_constant_matrices(basis_, num_obstacles)),
      kkt_(basis_, cm_, rho_xy),
      options_(options) {
  line_fit_ = (basis_.P.transpose() * basis_.P).ldlt().solve(basis_.P.transpose());
}

void BatchSolver::validate(const ProblemBatch& batch) const {
  const Eigen::Index n = basis_.num_samples();
  const Eigen::Index mn = static_cast<Eigen::Index>(cm_.num_obstacles) * n;
  if (batch.xi_x.size() != mn || batch.xi_y.size() != mn)
    throw std::invalid_argument("obstacle predictions must have m*n rows");
  if (batch.size() < 1) throw std::invalid_argument("batch must hold at least one instance");
  require_shape(batch.b_xy, cm_.A.rows(), batch.size(), "b_xy");
  require_shape(batch.b_psi, cm_.A_psi.rows(), batch.size(), "b_psi");
  if (!(batch.v_min > 0.0 && batch.v_min < batch.v_max))
    throw std::invalid_argument("speed bounds must satisfy 0 < v_min < v_max");
  if (!(batch.a_max > 0.0)) throw std::invalid_argument("a_max must be positive");
  if (!(batch.a >= batch.b && batch.b > 0.0))
    throw std::invalid_argument("ellipse axes must satisfy a >= b > 0");
  if (batch.rho_xy != kkt_.rho())
    throw std::invalid_argument("batch rho_xy differs from the factorized KKT system");
}

AmState BatchSolver::init_state(const ProblemBatch& batch, const AmState* warm) const {
  validate(batch);
  const Eigen::Index nb = basis_.num_basis();
  const Eigen::Index n = basis_.num_samples();
  const Eigen::Index mn = static_cast<Eigen::Index>(cm_.num_obstacles) * n;
  const Eigen::Index L = batch.size();

  if (warm != nullptr) {
    require_shape(warm->c_x, nb, L, "warm c_x");
    require_shape(warm->c_y, nb, L, "warm c_y");
    require_shape(warm->c_psi, nb, L, "warm c_psi");
    require_shape(warm->alpha, mn, L, "warm alpha");
    require_shape(warm->d, mn, L, "warm d");
    require_shape(warm->alpha_a, n, L, "warm alpha_a");
    require_shape(warm->d_a, n, L, "warm d_a");
    require_shape(warm->v, n, L, "warm v");
    require_shape(warm->lambda_x, nb, L, "warm lambda_x");
    require_shape(warm->lambda_y, nb, L, "warm lambda_y");
    require_shape(warm->lambda_psi, nb, L, "warm lambda_psi");
    AmState s = *warm;
    s.iter = 0;
    if (options_.reset_multipliers_on_warm_start) {
      s.lambda_x.setZero();
      s.lambda_y.setZero();
      s.lambda_psi.setZero();
    }
    return s;
  }

  const BoundarySpec& spec = cm_.xy_spec;
  const int r_x0 = boundary_row(spec, 0);
  const int r_xg = boundary_row(spec, 3);
  const int r_v0 = boundary_row(spec, 1);
  if (r_x0 < 0 || r_xg < 0)
    throw std::invalid_argument("cold start needs start and end position constraints");
  const Eigen::Index ra = cm_.A_axis.rows();

  const double T = basis_.grid.horizon();
  Eigen::VectorXd tau(n);
  for (Eigen::Index k = 0; k < n; ++k) tau(k) = (basis_.grid.at(static_cast<int>(k)) - basis_.grid.t0) / T;

  AmState s;
  Eigen::MatrixXd xline(n, L), yline(n, L);
  Eigen::MatrixXd v0 = Eigen::MatrixXd::Zero(n, L);
  for (Eigen::Index l = 0; l < L; ++l) {
    const double x0 = batch.b_xy(r_x0, l), xg = batch.b_xy(r_xg, l);
    const double y0 = batch.b_xy(ra + r_x0, l), yg = batch.b_xy(ra + r_xg, l);
    xline.col(l) = (x0 + (xg - x0) * tau.array()).matrix();
    yline.col(l) = (y0 + (yg - y0) * tau.array()).matrix();
    const double speed =
        r_v0 >= 0 ? std::hypot(batch.b_xy(r_v0, l), batch.b_xy(ra + r_v0, l)) : batch.v_min;
    v0.col(l).setConstant(std::clamp(speed, batch.v_min, batch.v_max));
  }
  s.c_x = line_fit_.lazyProduct(xline);
  s.c_y = line_fit_.lazyProduct(yline);
  s.c_psi = Eigen::MatrixXd::Zero(nb, L);
  s.v = v0;
  const kernels::Ellipse e{batch.a, batch.b};
  const Eigen::MatrixXd x = basis_.P.lazyProduct(s.c_x);
  const Eigen::MatrixXd y = basis_.P.lazyProduct(s.c_y);
  k().obstacle_angles(x, y, batch.xi_x, batch.xi_y, e, s.alpha);
  k().obstacle_ratios(x, y, batch.xi_x, batch.xi_y, e, s.alpha, s.d);
  s.alpha_a = Eigen::MatrixXd::Zero(n, L);
  s.d_a = Eigen::MatrixXd::Zero(n, L);
  s.lambda_x = Eigen::MatrixXd::Zero(nb, L);
  s.lambda_y = Eigen::MatrixXd::Zero(nb, L);
  s.lambda_psi = Eigen::MatrixXd::Zero(nb, L);
  return s;
}

Eigen::MatrixXd BatchSolver::build_g(const AmState& s, const ProblemBatch& batch) const {
  const Eigen::Index n = basis_.num_samples();
  const Eigen::Index mn = static_cast<Eigen::Index>(cm_.num_obstacles) * n;
  const Eigen::Index axis = mn + 2 * n;
  const Eigen::Index L = s.size();
  const Eigen::MatrixXd psi = basis_.P.lazyProduct(s.c_psi);
  Eigen::MatrixXd g(2 * axis, L);
  for (Eigen::Index l = 0; l < L; ++l) {
    for (Eigen::Index r = 0; r < mn; ++r) {
      g(r, l) = batch.xi_x(r) + batch.a * s.d(r, l) * std::cos(s.alpha(r, l));
      g(axis + r, l) = batch.xi_y(r) + batch.b * s.d(r, l) * std::sin(s.alpha(r, l));
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      g(mn + k, l) = s.d_a(k, l) * std::cos(s.alpha_a(k, l));
      g(axis + mn + k, l) = s.d_a(k, l) * std::sin(s.alpha_a(k, l));
      g(mn + n + k, l) = s.v(k, l) * std::cos(psi(k, l));
      g(axis + mn + n + k, l) = s.v(k, l) * std::sin(psi(k, l));
    }
  }
  return g;
}

Eigen::MatrixXd BatchSolver::project_g(const AmState& s, const ProblemBatch& batch) const {
  const int n = basis_.num_samples();
  const Eigen::Index nb = basis_.num_basis();
  const kernels::Ellipse e{batch.a, batch.b};
  Eigen::MatrixXd sum_x, sum_y, acc_x, acc_y, nh_x, nh_y;
  k().sum_obstacle_targets(batch.xi_x, batch.xi_y, e, s.alpha, s.d, n, sum_x, sum_y);
  k().polar_targets(s.d_a, s.alpha_a, acc_x, acc_y);
  const Eigen::MatrixXd psi = basis_.P.lazyProduct(s.c_psi);
  k().polar_targets(s.v, psi, nh_x, nh_y);

  const auto& P = basis_.P;
  const auto& Pd = basis_.Pdot;
  const auto& Pdd = basis_.Pddot;
  Eigen::MatrixXd ftg(2 * nb, s.size());
  ftg.topRows(nb).noalias() = P.transpose().lazyProduct(sum_x);
  ftg.topRows(nb).noalias() += Pdd.transpose().lazyProduct(acc_x);
  ftg.topRows(nb).noalias() += Pd.transpose().lazyProduct(nh_x);
  ftg.bottomRows(nb).noalias() = P.transpose().lazyProduct(sum_y);
  ftg.bottomRows(nb).noalias() += Pdd.transpose().lazyProduct(acc_y);
  ftg.bottomRows(nb).noalias() += Pd.transpose().lazyProduct(nh_y);
  return ftg;
}

Eigen::MatrixXd BatchSolver::rhs_xy(const AmState& s, const ProblemBatch& batch) const {
  const Eigen::Index nb = basis_.num_basis();
  const Eigen::Index ra = cm_.A.rows();
  Eigen::MatrixXd rhs(2 * nb + ra, s.size());
  rhs.topRows(2 * nb) = batch.rho_xy * project_g(s, batch);
  rhs.topRows(nb) += s.lambda_x;
  rhs.middleRows(nb, nb) += s.lambda_y;
  rhs.bottomRows(ra) = batch.b_xy;
  return rhs;
}

Eigen::MatrixXd BatchSolver::heading_targets(const AmState& s) const {
  Eigen::MatrixXd theta;
  k().heading_targets(basis_.Pdot.lazyProduct(s.c_x), basis_.Pdot.lazyProduct(s.c_y), theta);
  return theta;
}

Eigen::MatrixXd BatchSolver::rhs_psi(const AmState& s, const ProblemBatch& batch) const {
  const Eigen::Index nb = basis_.num_basis();
  const Eigen::Index rp = cm_.A_psi.rows();
  Eigen::MatrixXd rhs(nb + rp, s.size());
  rhs.topRows(nb) = batch.rho_xy * (basis_.P.transpose().lazyProduct(heading_targets(s))) + s.lambda_psi;
  rhs.bottomRows(rp) = batch.b_psi;
  return rhs;
}

void BatchSolver::step_xy(AmState& s, const ProblemBatch& batch) const {
  const Eigen::Index nb = basis_.num_basis();
  const Eigen::MatrixXd sol = kkt_.solve_xy(rhs_xy(s, batch));
  s.c_x = sol.topRows(nb);
  s.c_y = sol.middleRows(nb, nb);
}

void BatchSolver::step_psi(AmState& s, const ProblemBatch& batch) const {
  const Eigen::Index nb = basis_.num_basis();
  s.c_psi = kkt_.solve_psi(rhs_psi(s, batch)).topRows(nb);
}

void BatchSolver::step_v(AmState& s, const ProblemBatch& batch) const {
  k().clip_speed(basis_.Pdot.lazyProduct(s.c_x), basis_.Pdot.lazyProduct(s.c_y), batch.v_min, batch.v_max, s.v);
}

void BatchSolver::step_alpha_obs(AmState& s, const ProblemBatch& batch) const {
  k().obstacle_angles(basis_.P.lazyProduct(s.c_x), basis_.P.lazyProduct(s.c_y), batch.xi_x, batch.xi_y,
                      {batch.a, batch.b}, s.alpha);
}

void BatchSolver::step_d_obs(AmState& s, const ProblemBatch& batch) const {
  k().obstacle_ratios(basis_.P.lazyProduct(s.c_x), basis_.P.lazyProduct(s.c_y), batch.xi_x, batch.xi_y,
                      {batch.a, batch.b}, s.alpha, s.d);
}

void BatchSolver::step_acc(AmState& s, const ProblemBatch& batch) const {
  k().accel_polar(basis_.Pddot.lazyProduct(s.c_x), basis_.Pddot.lazyProduct(s.c_y), batch.a_max, s.alpha_a, s.d_a);
}

void BatchSolver::step_alpha_acc(AmState& s, const ProblemBatch& batch) const {
  Eigen::MatrixXd unused;
  k().accel_polar(basis_.Pddot.lazyProduct(s.c_x), basis_.Pddot.lazyProduct(s.c_y), batch.a_max, s.alpha_a, unused);
}

void BatchSolver::step_d_acc(AmState& s, const ProblemBatch& batch) const {
  Eigen::MatrixXd unused;
  k().accel_polar(basis_.Pddot.lazyProduct(s.c_x), basis_.Pddot.lazyProduct(s.c_y), batch.a_max, unused, s.d_a);
}

void BatchSolver::update_multipliers(AmState& s, const ProblemBatch& batch) const {
  const Eigen::Index nb = basis_.num_basis();
  const double rho = batch.rho_xy;
  const Eigen::MatrixXd ftg = project_g(s, batch);
  s.lambda_x -= rho * (cm_.FtF_axis.lazyProduct(s.c_x) - ftg.topRows(nb));
  s.lambda_y -= rho * (cm_.FtF_axis.lazyProduct(s.c_y) - ftg.bottomRows(nb));
  const Eigen::MatrixXd misfit = basis_.P.lazyProduct(s.c_psi) - heading_targets(s);
  s.lambda_psi -= rho * (basis_.P.transpose().lazyProduct(misfit));
}

Residuals BatchSolver::compute_residuals(const AmState& s, const ProblemBatch& batch) const {
  const auto& P = basis_.P;
  const auto& Pd = basis_.Pdot;
  const auto& Pdd = basis_.Pddot;
  Residuals r;
  k().block_norms(P.lazyProduct(s.c_x), P.lazyProduct(s.c_y), Pd.lazyProduct(s.c_x), Pd.lazyProduct(s.c_y), Pdd.lazyProduct(s.c_x), Pdd.lazyProduct(s.c_y),
                  P.lazyProduct(s.c_psi), batch.xi_x, batch.xi_y, {batch.a, batch.b}, s.alpha, s.d,
                  s.alpha_a, s.d_a, s.v, r.r_obs, r.r_acc, r.r_nonhol);
  return r;
}

void BatchSolver::iterate_reference(AmState& s, const ProblemBatch& batch) const {
  step_xy(s, batch);
  step_psi(s, batch);
  step_v(s, batch);
  step_alpha_obs(s, batch);
  step_d_obs(s, batch);
  step_acc(s, batch);
  update_multipliers(s, batch);
  ++s.iter;
}

Residuals BatchSolver::iterate(AmState& s, const ProblemBatch& batch) const {
  Eigen::MatrixXd ftg;
  bool valid = false;
  return iterate_cached(s, batch, ftg, valid);
}

Residuals BatchSolver::iterate_cached(AmState& s, const ProblemBatch& batch,
                                      Eigen::MatrixXd& ftg, bool& ftg_valid) const {
  const Eigen::Index nb = basis_.num_basis();
  const auto& P = basis_.P;
  const auto& Pd = basis_.Pdot;
  const auto& Pdd = basis_.Pddot;
  const double rho = batch.rho_xy;
  const Eigen::Index L = s.size();
  if (!ftg_valid) ftg = project_g(s, batch);

  {
    const Eigen::Index ra = cm_.A.rows();
    Eigen::MatrixXd rhs(2 * nb + ra, L);
    rhs.topRows(2 * nb) = rho * ftg;
    rhs.topRows(nb) += s.lambda_x;
    rhs.middleRows(nb, nb) += s.lambda_y;
    rhs.bottomRows(ra) = batch.b_xy;
    const Eigen::MatrixXd sol = kkt_.solve_xy(rhs);
    s.c_x = sol.topRows(nb);
    s.c_y = sol.middleRows(nb, nb);
  }
  const Eigen::MatrixXd x = P.lazyProduct(s.c_x), y = P.lazyProduct(s.c_y);
  const Eigen::MatrixXd xd = Pd.lazyProduct(s.c_x), yd = Pd.lazyProduct(s.c_y);
  const Eigen::MatrixXd xdd = Pdd.lazyProduct(s.c_x), ydd = Pdd.lazyProduct(s.c_y);

  Eigen::MatrixXd theta;
  k().heading_targets(xd, yd, theta);
  {
    const Eigen::Index rp = cm_.A_psi.rows();
    Eigen::MatrixXd rhs(nb + rp, L);
    rhs.topRows(nb) = rho * (P.transpose().lazyProduct(theta)) + s.lambda_psi;
    rhs.bottomRows(rp) = batch.b_psi;
    s.c_psi = kkt_.solve_psi(rhs).topRows(nb);
  }
  const Eigen::MatrixXd psi = P.lazyProduct(s.c_psi);

  k().clip_speed(xd, yd, batch.v_min, batch.v_max, s.v);
  Eigen::MatrixXd sum_x, sum_y;
  Eigen::VectorXd r_obs_sq;
  k().obstacle_update(x, y, batch.xi_x, batch.xi_y, {batch.a, batch.b}, s.alpha, s.d, sum_x,
                      sum_y, r_obs_sq);
  k().accel_polar(xdd, ydd, batch.a_max, s.alpha_a, s.d_a);

  Eigen::MatrixXd acc_x, acc_y, nh_x, nh_y;
  k().polar_targets(s.d_a, s.alpha_a, acc_x, acc_y);
  k().polar_targets(s.v, psi, nh_x, nh_y);
  ftg.resize(2 * nb, L);
  ftg.topRows(nb).noalias() = P.transpose().lazyProduct(sum_x);
  ftg.topRows(nb).noalias() += Pdd.transpose().lazyProduct(acc_x);
  ftg.topRows(nb).noalias() += Pd.transpose().lazyProduct(nh_x);
  ftg.bottomRows(nb).noalias() = P.transpose().lazyProduct(sum_y);
  ftg.bottomRows(nb).noalias() += Pdd.transpose().lazyProduct(acc_y);
  ftg.bottomRows(nb).noalias() += Pd.transpose().lazyProduct(nh_y);
  ftg_valid = true;

  s.lambda_x -= rho * (cm_.FtF_axis.lazyProduct(s.c_x) - ftg.topRows(nb));
  s.lambda_y -= rho * (cm_.FtF_axis.lazyProduct(s.c_y) - ftg.bottomRows(nb));
  s.lambda_psi -= rho * (P.transpose().lazyProduct((psi - theta)));
  ++s.iter;

  Residuals r;
  r.r_obs = r_obs_sq.cwiseSqrt();
  r.r_acc = ((xdd - acc_x).colwise().squaredNorm() + (ydd - acc_y).colwise().squaredNorm())
                .cwiseSqrt()
                .transpose();
  r.r_nonhol = ((xd - nh_x).colwise().squaredNorm() + (yd - nh_y).colwise().squaredNorm())
                   .cwiseSqrt()
                   .transpose();
  return r;
}

SolveResult BatchSolver::solve(const ProblemBatch& batch, const AmState* warm) const {
  return solve(batch, warm, options_.max_iter, options_.tol);
}

SolveResult BatchSolver::solve(const ProblemBatch& batch, const AmState* warm, int max_iter,
                               double tol) const {
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  SolveResult out;
  out.state = init_state(batch, warm);
  out.history.reserve(static_cast<std::size_t>(max_iter));
  Eigen::MatrixXd ftg;
  bool ftg_valid = false;
  for (int it = 0; it < max_iter; ++it) {
    out.history.push_back(iterate_cached(out.state, batch, ftg, ftg_valid));
    ++out.iterations;
    if (out.history.back().max() <= tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

SampledTrajectories BatchSolver::sample(const AmState& s) const {
  SampledTrajectories t;
  t.x = basis_.P.lazyProduct(s.c_x);
  t.y = basis_.P.lazyProduct(s.c_y);
  t.xd = basis_.Pdot.lazyProduct(s.c_x);
  t.yd = basis_.Pdot.lazyProduct(s.c_y);
  t.xdd = basis_.Pddot.lazyProduct(s.c_x);
  t.ydd = basis_.Pddot.lazyProduct(s.c_y);
  t.psi = basis_.P.lazyProduct(s.c_psi);
  t.psid = basis_.Pdot.lazyProduct(s.c_psi);
  return t;
}

}  // namespace batchopt
