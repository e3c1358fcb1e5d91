#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "batchopt/batch_solver.hpp"
#include "batchopt/oracle.hpp"

using namespace batchopt;

namespace {

BatchSolver make_solver(int m = 10, kernels::Backend be = kernels::Backend::OpenMP) {
  SolverOptions o;
  o.backend = be;
  return BatchSolver(build_basis(build_time_grid(0.0, 10.0, 100), 10), m, 1.0, o);
}

Eigen::MatrixXd stacked(const AmState& s) {
  Eigen::MatrixXd c(2 * s.c_x.rows(), s.c_x.cols());
  c << s.c_x, s.c_y;
  return c;
}

// ||F [c_x; c_y] - g||^2 summed over instances.
double penalty(const BatchSolver& solver, const AmState& s, const ProblemBatch& b) {
  return (solver.matrices().F * stacked(s) - solver.build_g(s, b)).squaredNorm();
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

void expect_states_bitwise(const AmState& a, const AmState& b) {
  EXPECT_EQ(a.c_x, b.c_x);
  EXPECT_EQ(a.c_y, b.c_y);
  EXPECT_EQ(a.c_psi, b.c_psi);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(a.d, b.d);
  EXPECT_EQ(a.alpha_a, b.alpha_a);
  EXPECT_EQ(a.d_a, b.d_a);
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.lambda_x, b.lambda_x);
  EXPECT_EQ(a.lambda_y, b.lambda_y);
  EXPECT_EQ(a.lambda_psi, b.lambda_psi);
}

}  // namespace

TEST(Solver, ColdStartMultipliersZero) {
  const BatchSolver solver = make_solver();
  std::mt19937_64 rng(1);
  const ProblemBatch b = oracle::random_batch(solver, 5, rng);
  const AmState s = solver.init_state(b);
  EXPECT_EQ(s.lambda_x.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.lambda_y.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.lambda_psi.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Solver, ColdStartConstantCurve) {
  const BatchSolver solver = make_solver();
  std::mt19937_64 rng(2);
  ProblemBatch b = oracle::random_batch(solver, 3, rng);
  const Eigen::Index ra = solver.matrices().A_axis.rows();
  b.b_xy.setZero();
  for (int l = 0; l < 3; ++l) {
    b.b_xy(0, l) = b.b_xy(3, l) = 7.0 + l;
    b.b_xy(ra, l) = b.b_xy(ra + 3, l) = 2.0;
  }
  const AmState s = solver.init_state(b);
  const Eigen::MatrixXd x = solver.basis().P * s.c_x;
  for (int l = 0; l < 3; ++l)
    EXPECT_LT((x.col(l).array() - (7.0 + l)).abs().maxCoeff(), 1e-10);
}

TEST(Solver, ColdStartThroughObstacleStillRuns) {
  const BatchSolver solver = make_solver(1);
  std::mt19937_64 rng(3);
  ProblemBatch b = oracle::random_batch(solver, 1, rng);
  const Eigen::Index ra = solver.matrices().A_axis.rows();
  b.b_xy.setZero();
  b.b_xy(0, 0) = 0.0;
  b.b_xy(3, 0) = 100.0;
  b.b_xy(1, 0) = b.b_xy(4, 0) = 10.0;
  b.b_xy(ra, 0) = b.b_xy(ra + 3, 0) = 6.0;
  b.xi_x.setConstant(50.0);
  b.xi_y.setConstant(6.0);
  const SolveResult r = solver.solve(b, nullptr, 50, 0.0);
  EXPECT_EQ(r.iterations, 50);
  EXPECT_TRUE(r.state.c_x.allFinite());
}

TEST(Solver, ObstacleBlockAtUnitRatio) {
  const BatchSolver solver = make_solver(2);
  std::mt19937_64 rng(4);
  const ProblemBatch b = oracle::random_batch(solver, 2, rng);
  AmState s = oracle::random_state(solver, b, rng);
  s.alpha.setZero();
  s.d.setOnes();
  s.v.setZero();
  const Eigen::MatrixXd g = solver.build_g(s, b);
  const Eigen::Index mn = b.xi_x.size(), n = 100;
  for (int l = 0; l < 2; ++l) {
    EXPECT_LT((g.col(l).head(mn) - (b.xi_x.array() + b.a).matrix()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(g.col(l).segment(mn + n, n).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.col(l).segment(2 * mn + 3 * n, n).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Solver, NonholResidualWithZeroSpeed) {
  const BatchSolver solver = make_solver(1);
  std::mt19937_64 rng(5);
  const ProblemBatch b = oracle::random_batch(solver, 2, rng);
  AmState s = oracle::random_state(solver, b, rng);
  s.v.setZero();
  const Residuals r = solver.compute_residuals(s, b);
  const SampledTrajectories st = solver.sample(s);
  for (int l = 0; l < 2; ++l) {
    const double expect = std::sqrt(st.xd.col(l).squaredNorm() + st.yd.col(l).squaredNorm());
    EXPECT_NEAR(r.r_nonhol(l), expect, 1e-12 * expect);
  }
}

TEST(Solver, StraightHeadingFitsZero) {
  const BatchSolver solver = make_solver(1);
  std::mt19937_64 rng(6);
  ProblemBatch b = oracle::random_batch(solver, 1, rng);
  const Eigen::Index ra = solver.matrices().A_axis.rows();
  b.b_xy.setZero();
  b.b_xy(1, 0) = b.b_xy(4, 0) = 10.0;
  b.b_xy(3, 0) = 100.0;
  b.b_psi.setZero();
  AmState s = solver.init_state(b);
  EXPECT_EQ(solver.heading_targets(s).cwiseAbs().maxCoeff(), 0.0);
  (void)ra;
  solver.step_psi(s, b);
  EXPECT_LT(s.c_psi.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Solver, ConsistentStateLeavesMultipliers) {
  // Straight constant-speed line with no obstacle in reach: every block can
  // be matched exactly, so the multiplier update is a no-op.
  const BatchSolver solver = make_solver(1);
  std::mt19937_64 rng(7);
  ProblemBatch b = oracle::random_batch(solver, 1, rng);
  const Eigen::Index ra = solver.matrices().A_axis.rows();
  b.b_xy.setZero();
  b.b_xy(1, 0) = b.b_xy(4, 0) = 10.0;
  b.b_xy(3, 0) = 100.0;
  b.b_xy(ra, 0) = b.b_xy(ra + 3, 0) = 6.0;
  b.b_psi.setZero();
  b.v_min = 0.1;
  b.v_max = 30.0;
  b.xi_x.setConstant(1e4);
  b.xi_y.setConstant(1e4);
  AmState s = solver.init_state(b);
  solver.step_v(s, b);
  solver.step_alpha_obs(s, b);
  solver.step_d_obs(s, b);
  solver.step_acc(s, b);
  const Residuals r = solver.compute_residuals(s, b);
  EXPECT_LT(r.max(), 1e-9);
  const AmState before = s;
  solver.update_multipliers(s, b);
  // What moves is rho F^T r of the roundoff left in r.
  EXPECT_LT(max_abs_diff(s.lambda_x, before.lambda_x), 1e-8);
  EXPECT_LT(max_abs_diff(s.lambda_y, before.lambda_y), 1e-8);
}

TEST(Solver, IterateMatchesReference) {
  const BatchSolver solver = make_solver();
  std::mt19937_64 rng(8);
  const ProblemBatch b = oracle::random_batch(solver, 6, rng);
  AmState fast = solver.init_state(b), ref = fast;
  for (int k = 0; k < 20; ++k) {
    solver.iterate(fast, b);
    solver.iterate_reference(ref, b);
  }
  EXPECT_LT(max_abs_diff(fast.c_x, ref.c_x), 1e-9);
  EXPECT_LT(max_abs_diff(fast.c_y, ref.c_y), 1e-9);
  EXPECT_LT(max_abs_diff(fast.c_psi, ref.c_psi), 1e-9);
  EXPECT_LT(max_abs_diff(fast.lambda_x, ref.lambda_x), 1e-9);
}

TEST(Solver, SerialAndOpenMPBitwise) {
  const BatchSolver ser = make_solver(10, kernels::Backend::Serial);
  const BatchSolver par = make_solver(10, kernels::Backend::OpenMP);
  std::mt19937_64 rng(9);
  const ProblemBatch b = oracle::random_batch(ser, 11, rng);
  const SolveResult rs = ser.solve(b, nullptr, 40, 0.0);
  const SolveResult rp = par.solve(b, nullptr, 40, 0.0);
  expect_states_bitwise(rs.state, rp.state);
  ASSERT_EQ(rs.history.size(), rp.history.size());
  EXPECT_EQ(rs.history.back().r_nonhol, rp.history.back().r_nonhol);
}

TEST(Solver, PermutationInvariance) {
  const BatchSolver solver = make_solver();
  std::mt19937_64 rng(10);
  const ProblemBatch b = oracle::random_batch(solver, 7, rng);
  std::vector<int> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  ProblemBatch bp = b;
  for (int i = 0; i < 7; ++i) {
    bp.b_xy.col(i) = b.b_xy.col(perm[i]);
    bp.b_psi.col(i) = b.b_psi.col(perm[i]);
  }
  const SolveResult r = solver.solve(b, nullptr, 60, 0.0);
  const SolveResult rp = solver.solve(bp, nullptr, 60, 0.0);
  const AmState back = r.state.columns(perm);
  EXPECT_LT(max_abs_diff(back.c_x, rp.state.c_x), 1e-10);
  EXPECT_LT(max_abs_diff(back.c_y, rp.state.c_y), 1e-10);
  EXPECT_LT(max_abs_diff(back.c_psi, rp.state.c_psi), 1e-10);
}

TEST(Solver, IdenticalInstancesStayIdentical) {
  const BatchSolver solver = make_solver();
  std::mt19937_64 rng(11);
  ProblemBatch b = oracle::random_batch(solver, 5, rng);
  for (int l = 1; l < 5; ++l) {
    b.b_xy.col(l) = b.b_xy.col(0);
    b.b_psi.col(l) = b.b_psi.col(0);
  }
  const SolveResult r = solver.solve(b, nullptr, 60, 0.0);
  for (int l = 1; l < 5; ++l) {
    EXPECT_LT((r.state.c_x.col(l) - r.state.c_x.col(0)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((r.state.c_y.col(l) - r.state.c_y.col(0)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Solver, FactorizesOnceAtConstruction) {
  const long f0 = KktSystem::factorization_count();
  const BatchSolver solver = make_solver();
  EXPECT_EQ(KktSystem::factorization_count() - f0, 2);
  std::mt19937_64 rng(12);
  for (int l : {4, 11, 44}) {
    const ProblemBatch b = oracle::random_batch(solver, l, rng);
    solver.solve(b, nullptr, 10, 0.0);
  }
  EXPECT_EQ(KktSystem::factorization_count() - f0, 2);
}

TEST(Solver, BlockStepsDoNotIncreasePenalty) {
  const BatchSolver solver = make_solver();
  std::mt19937_64 rng(13);
  const ProblemBatch b = oracle::random_batch(solver, 8, rng);
  AmState s = solver.init_state(b);
  for (int k = 0; k < 5; ++k) solver.iterate(s, b);
  s = oracle::random_state(solver, b, rng);
  solver.step_xy(s, b);
  solver.step_psi(s, b);
  using Step = void (BatchSolver::*)(AmState&, const ProblemBatch&) const;
  for (Step step : {&BatchSolver::step_v, &BatchSolver::step_alpha_obs, &BatchSolver::step_d_obs,
                    &BatchSolver::step_alpha_acc, &BatchSolver::step_d_acc}) {
    const double before = penalty(solver, s, b);
    (solver.*step)(s, b);
    EXPECT_LE(penalty(solver, s, b), before * (1.0 + 1e-9) + 1e-9);
  }
}

TEST(Solver, BoundsHoldAfterEveryIteration) {
  const BatchSolver solver = make_solver();
  std::mt19937_64 rng(14);
  const ProblemBatch b = oracle::random_batch(solver, 11, rng);
  AmState s = solver.init_state(b);
  const ConstantMatrices& cm = solver.matrices();
  for (int k = 0; k < 30; ++k) {
    solver.iterate(s, b);
    EXPECT_GE(s.v.minCoeff(), b.v_min);
    EXPECT_LE(s.v.maxCoeff(), b.v_max);
    EXPECT_GE(s.d.minCoeff(), 1.0);
    EXPECT_GE(s.d_a.minCoeff(), 0.0);
    EXPECT_LE(s.d_a.maxCoeff(), b.a_max);
    const Eigen::MatrixXd eq = cm.A * stacked(s) - b.b_xy;
    EXPECT_LT(eq.cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((cm.A_psi * s.c_psi - b.b_psi).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Solver, ValidateRejectsShape) {
  const BatchSolver solver = make_solver();
  std::mt19937_64 rng(15);
  ProblemBatch b = oracle::random_batch(solver, 3, rng);
  b.xi_x.resize(10);
  EXPECT_THROW(solver.validate(b), std::invalid_argument);
}

TEST(Kernels, SpeedClip) {
  Eigen::MatrixXd xd(3, 1), yd(3, 1), v;
  xd << 3.0, 0.5, 30.0;
  yd << 4.0, 0.0, 0.0;
  kernels::serial::clip_speed(xd, yd, 1.0, 20.0, v);
  EXPECT_DOUBLE_EQ(v(0), 5.0);
  EXPECT_DOUBLE_EQ(v(1), 1.0);
  EXPECT_DOUBLE_EQ(v(2), 20.0);
}

TEST(Kernels, ObstacleAngles) {
  Eigen::MatrixXd x(3, 1), y(3, 1), alpha;
  Eigen::VectorXd xi_x = Eigen::VectorXd::Zero(3), xi_y = Eigen::VectorXd::Zero(3);
  x << 2.0, 1.0, 1.0;
  y << 0.0, 1.0, 1.0;
  kernels::serial::obstacle_angles(x.topRows(2), y.topRows(2), xi_x.head(2), xi_y.head(2),
                                   {2.0, 2.0}, alpha);
  EXPECT_EQ(alpha(0), 0.0);
  EXPECT_DOUBLE_EQ(alpha(1), std::atan(1.0));
  kernels::serial::obstacle_angles(x.bottomRows(1), y.bottomRows(1), xi_x.head(1), xi_y.head(1),
                                   {5.6, 3.1}, alpha);
  EXPECT_DOUBLE_EQ(alpha(0), std::atan2(5.6, 3.1));
}

TEST(Kernels, ObstacleRatios) {
  const double a = 5.6, b = 3.1;
  Eigen::MatrixXd x(3, 1), y = Eigen::MatrixXd::Zero(3, 1), alpha = Eigen::MatrixXd::Zero(3, 1), d;
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(3);
  x << a, 2 * a, 0.5 * a;
  kernels::serial::obstacle_ratios(x, y, xi, xi, {a, b}, alpha, d);
  EXPECT_DOUBLE_EQ(d(0), 1.0);
  EXPECT_DOUBLE_EQ(d(1), 2.0);
  EXPECT_DOUBLE_EQ(d(2), 1.0);
}

TEST(Kernels, AccelPolar) {
  Eigen::MatrixXd xdd(3, 1), ydd(3, 1), al, da;
  xdd << 0.0, 3.0, 30.0;
  ydd << 0.0, 4.0, 0.0;
  kernels::serial::accel_polar(xdd.topRows(2), ydd.topRows(2), 10.0, al, da);
  EXPECT_EQ(al(0), 0.0);
  EXPECT_EQ(da(0), 0.0);
  EXPECT_DOUBLE_EQ(al(1), std::atan2(4.0, 3.0));
  EXPECT_DOUBLE_EQ(da(1), 5.0);
  kernels::serial::accel_polar(xdd.bottomRows(1), ydd.bottomRows(1), 8.0, al, da);
  EXPECT_DOUBLE_EQ(da(0), 8.0);
}

TEST(Kernels, BackendsAgreeBitwise) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  const int n = 100, m = 10, l = 11;
  auto rnd = [&](int r, int c) {
    Eigen::MatrixXd mtx(r, c);
    for (Eigen::Index i = 0; i < mtx.size(); ++i) mtx.data()[i] = u(rng);
    return mtx;
  };
  const Eigen::MatrixXd x = rnd(n, l), y = rnd(n, l), xd = rnd(n, l), yd = rnd(n, l);
  const Eigen::VectorXd xi_x = rnd(m * n, 1), xi_y = rnd(m * n, 1);
  const kernels::Ellipse e{5.6, 3.1};
  Eigen::MatrixXd a1, a2, d1, d2, sx1, sx2, sy1, sy2, t1, t2;
  Eigen::VectorXd q1, q2;
  kernels::serial::obstacle_update(x, y, xi_x, xi_y, e, a1, d1, sx1, sy1, q1);
  kernels::omp::obstacle_update(x, y, xi_x, xi_y, e, a2, d2, sx2, sy2, q2);
  EXPECT_EQ(a1, a2);
  EXPECT_EQ(d1, d2);
  EXPECT_EQ(sx1, sx2);
  EXPECT_EQ(sy1, sy2);
  EXPECT_EQ(q1, q2);
  kernels::serial::heading_targets(xd, yd, t1);
  kernels::omp::heading_targets(xd, yd, t2);
  EXPECT_EQ(t1, t2);
  kernels::serial::accel_polar(xd, yd, 4.0, a1, d1);
  kernels::omp::accel_polar(xd, yd, 4.0, a2, d2);
  EXPECT_EQ(a1, a2);
  EXPECT_EQ(d1, d2);
}
