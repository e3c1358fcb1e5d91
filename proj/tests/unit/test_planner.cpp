#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "batchopt/planner.hpp"

using namespace batchopt;

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

EgoState ego_at(double x, double y, double v) {
  EgoState e;
  e.x = x;
  e.y = y;
  e.vx = v;
  return e;
}

Trajectory straight(int n, double y, double v, double dt) {
  Trajectory t;
  t.x.resize(n);
  for (int k = 0; k < n; ++k) t.x(k) = v * dt * k;
  t.y = Eigen::VectorXd::Constant(n, y);
  t.psi = Eigen::VectorXd::Zero(n);
  t.psidot = Eigen::VectorXd::Zero(n);
  t.v = Eigen::VectorXd::Constant(n, v);
  t.xdd = Eigen::VectorXd::Zero(n);
  t.ydd = Eigen::VectorXd::Zero(n);
  return t;
}

Candidate cand(double cost, bool ok) {
  Candidate c;
  c.meta_cost = cost;
  c.check.residual_ok = ok;
  return c;
}

VehicleState vehicle(int id, int lane, double x, double v) {
  VehicleState s;
  s.id = id;
  s.lane = lane;
  s.x = x;
  s.y = LaneGeometry{}.center(lane);
  s.vx = v;
  return s;
}

}  // namespace

TEST(Goals, CruiseRoundRobin) {
  LaneGeometry lanes;
  MetaCostSpec spec;
  spec.v_cruise = 15.0;
  const auto g = sample_goals_cruise(ego_at(12.0, 6.0, 15.0), lanes, spec, 11, 10.0);
  ASSERT_EQ(g.size(), 11u);
  std::map<int, int> count;
  for (const Goal& q : g) {
    EXPECT_DOUBLE_EQ(q.x, 162.0);
    EXPECT_DOUBLE_EQ(q.y, lanes.center(q.lane));
    ++count[q.lane];
  }
  EXPECT_EQ(count[0], 3);
  EXPECT_EQ(count[1], 3);
  EXPECT_EQ(count[2], 3);
  EXPECT_EQ(count[3], 2);
}

TEST(Goals, CruiseDegenerate) {
  LaneGeometry one{1, 4.0};
  MetaCostSpec spec;
  const auto g = sample_goals_cruise(ego_at(0.0, 2.0, 15.0), one, spec, 5, 10.0);
  for (const Goal& q : g) EXPECT_EQ(q.y, 2.0);
  spec.v_cruise = 0.0;
  for (const Goal& q : sample_goals_cruise(ego_at(3.0, 2.0, 0.0), LaneGeometry{}, spec, 4, 10.0))
    EXPECT_EQ(q.x, 3.0);
}

TEST(Goals, HighSpeedSplit) {
  LaneGeometry lanes;
  MetaCostSpec spec;
  spec.kind = MetaKind::HighSpeedRightLane;
  spec.v_max = 20.0;
  const auto g = sample_goals_highspeed(ego_at(0.0, 6.0, 15.0), lanes, spec, 11, 10.0);
  int right = 0;
  for (const Goal& q : g) right += q.lane == 0;
  EXPECT_EQ(right, 7);
  EXPECT_DOUBLE_EQ(g.front().x, 100.0);
  EXPECT_DOUBLE_EQ(g[6].x, 200.0);
  const auto two = sample_goals_highspeed(ego_at(0.0, 6.0, 15.0), lanes, spec, 2, 10.0);
  EXPECT_EQ(two[0].lane, 0);
  EXPECT_EQ(two[1].lane, 0);
}

TEST(Goals, Deterministic) {
  MetaCostSpec spec;
  const auto a = sample_goals(ego_at(1.5, 6.0, 15.0), LaneGeometry{}, spec, 11, 10.0);
  const auto b = sample_goals(ego_at(1.5, 6.0, 15.0), LaneGeometry{}, spec, 11, 10.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].lane, b[i].lane);
  }
}

TEST(AdaptGoals, OwnLaneFollowsLeader) {
  LaneGeometry lanes;
  MetaCostSpec spec;
  auto g = sample_goals_cruise(ego_at(0.0, 6.0, 15.0), lanes, spec, 11, 10.0);
  const auto sampled = g;
  // Predicted to 160 at t_f; the lane-1 gap behind it ends at 160 - 2a.
  adapt_goals(g, ego_at(0.0, 6.0, 15.0), {vehicle(0, 1, 80.0, 8.0)}, lanes, 10.0, 5.6, 0.1, 30.0);
  std::vector<const Goal*> lane1;
  for (const Goal& q : g)
    if (q.lane == 1) lane1.push_back(&q);
  ASSERT_EQ(lane1.size(), 3u);
  EXPECT_EQ(lane1[0]->x, 150.0);
  EXPECT_NEAR(lane1[1]->x, 160.0 - 11.2, 1e-12);
  EXPECT_EQ(lane1[1]->vx, 8.0);
  // Passing the leader is not reachable in lane, so the third copy stays.
  EXPECT_EQ(lane1[2]->x, 150.0);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i].lane != 1) EXPECT_EQ(g[i].x, sampled[i].x);
}

TEST(AdaptGoals, OtherLaneUsesEveryGap) {
  LaneGeometry lanes;
  MetaCostSpec spec;
  auto g = sample_goals_cruise(ego_at(0.0, 6.0, 15.0), lanes, spec, 11, 10.0);
  // Lane 0: one vehicle predicted to 150, i.e. on top of the goal.
  adapt_goals(g, ego_at(0.0, 6.0, 15.0), {vehicle(0, 0, 50.0, 10.0)}, lanes, 10.0, 5.6, 0.1, 30.0);
  std::vector<const Goal*> lane0;
  for (const Goal& q : g)
    if (q.lane == 0) lane0.push_back(&q);
  ASSERT_EQ(lane0.size(), 3u);
  EXPECT_EQ(lane0[0]->x, 150.0);
  // Both gaps are 11.2 away; the stable sort keeps the one behind first.
  EXPECT_NEAR(lane0[1]->x, 150.0 - 11.2, 1e-12);
  EXPECT_EQ(lane0[1]->vx, 10.0);
  EXPECT_NEAR(lane0[2]->x, 150.0 + 11.2, 1e-12);
  EXPECT_EQ(lane0[2]->vx, 15.0);
}

TEST(AdaptGoals, EmptyRoadUnchanged) {
  MetaCostSpec spec;
  auto g = sample_goals_cruise(ego_at(0.0, 6.0, 15.0), LaneGeometry{}, spec, 11, 10.0);
  const auto before = g;
  adapt_goals(g, ego_at(0.0, 6.0, 15.0), {}, LaneGeometry{}, 10.0, 5.6, 0.1, 30.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(g[i].x, before[i].x);
    EXPECT_EQ(g[i].vx, before[i].vx);
  }
}

TEST(MetaCost, Examples) {
  MetaCostSpec c;
  c.v_cruise = 15.0;
  EXPECT_EQ(meta_cost(straight(100, 6.0, 15.0, 0.1), c), 0.0);
  EXPECT_NEAR(meta_cost(straight(100, 6.0, 16.0, 0.1), c), 100.0, 1e-9);
  MetaCostSpec h;
  h.kind = MetaKind::HighSpeedRightLane;
  h.v_max = 20.0;
  h.y_rl = 2.0;
  EXPECT_NEAR(meta_cost(straight(100, 4.0, 20.0, 0.1), h), 400.0, 1e-9);
}

TEST(Filter, HeadingLimit) {
  FilterLimits lim;
  Trajectory t = straight(100, 6.0, 15.0, 0.1);
  const Eigen::VectorXd far = Eigen::VectorXd::Constant(100, 1e4);
  EXPECT_TRUE(check_candidate(t, 0.0, far, far, 5.6, 3.1, lim).feasible());
  t.psi(50) = 20.0 * kDeg;
  const Feasibility f = check_candidate(t, 0.0, far, far, 5.6, 3.1, lim);
  EXPECT_FALSE(f.heading_ok);
  EXPECT_FALSE(f.feasible());
  t.psi(50) = 12.9 * kDeg;
  EXPECT_TRUE(check_candidate(t, 0.0, far, far, 5.6, 3.1, lim).heading_ok);
}

TEST(Filter, GrazingObstacleRejected) {
  FilterLimits lim;
  const Trajectory t = straight(100, 6.0, 15.0, 0.1);
  // Obstacle sample 0.95 a ahead of the ego at sample 40, same y.
  Eigen::VectorXd xi_x = Eigen::VectorXd::Constant(100, 1e4), xi_y = Eigen::VectorXd::Constant(100, 6.0);
  xi_x(40) = t.x(40) + 0.95 * 5.6;
  const Feasibility f = check_candidate(t, 0.0, xi_x, xi_y, 5.6, 3.1, lim);
  const double direct = std::abs(t.x(40) - xi_x(40)) / 5.6;
  EXPECT_NEAR(f.min_ratio, direct, 1e-12);
  EXPECT_FALSE(f.clearance_ok);
  xi_x(40) = t.x(40) + 0.995 * 5.6;
  EXPECT_TRUE(check_candidate(t, 0.0, xi_x, xi_y, 5.6, 3.1, lim).clearance_ok);
}

TEST(Filter, ResidualAndRoad) {
  FilterLimits lim;
  const Eigen::VectorXd far = Eigen::VectorXd::Constant(100, 1e4);
  EXPECT_FALSE(check_candidate(straight(100, 6.0, 15.0, 0.1), 2e-3, far, far, 5.6, 3.1, lim).residual_ok);
  EXPECT_FALSE(check_candidate(straight(100, 0.5, 15.0, 0.1), 0.0, far, far, 5.6, 3.1, lim).road_ok);
}

TEST(Rank, Rules) {
  EXPECT_EQ(rank_candidates({cand(5.0, false), cand(9.0, true)}), 1);
  EXPECT_EQ(rank_candidates({cand(2.0, true), cand(1.0, true), cand(1.0, true)}), 1);
  EXPECT_FALSE(rank_candidates({cand(1.0, false)}).has_value());
  std::vector<Candidate> relaxed{cand(1.0, false), cand(3.0, false)};
  relaxed[0].check.max_residual = 0.5;
  relaxed[1].check.max_residual = 0.05;
  EXPECT_EQ(rank_relaxed(relaxed, 0.1), 1);
}

TEST(Control, Extract) {
  Trajectory t = straight(100, 6.0, 10.0, 0.1);
  ControlCommand c = extract_control(t, 2.5, 0.1, 0.1);
  EXPECT_EQ(c.steering, 0.0);
  EXPECT_EQ(c.accel, 0.0);
  t.psidot.setConstant(0.1);
  c = extract_control(t, 2.5, 0.1, 0.1);
  EXPECT_DOUBLE_EQ(c.steering, std::atan(0.025));
  t.v(1) = 10.3;
  EXPECT_NEAR(extract_control(t, 2.5, 0.1, 0.1).accel, 3.0, 1e-9);
}

class PlannerRun : public ::testing::Test {
 protected:
  static PlannerConfig config() {
    PlannerConfig pc;
    pc.meta.v_cruise = 15.0;
    return pc;
  }
};

TEST_F(PlannerRun, EmptyRoadKeepsLane) {
  Planner p(config());
  const CycleResult r = p.cycle(ego_at(0.0, 6.0, 15.0), {});
  ASSERT_TRUE(r.plan.best_index.has_value());
  const Candidate& best = r.plan.candidates[static_cast<std::size_t>(*r.plan.best_index)];
  EXPECT_EQ(best.goal.lane, 1);
  EXPECT_LE(best.meta_cost, 1e-2);
  EXPECT_EQ(r.fallback, Fallback::None);
  for (const Candidate& c : r.plan.candidates)
    if (c.check.feasible()) EXPECT_LE(best.meta_cost, c.meta_cost);
}

TEST_F(PlannerRun, WeightScalingKeepsBest) {
  PlannerConfig pc = config();
  pc.meta.kind = MetaKind::HighSpeedRightLane;
  pc.meta.v_max = 20.0;
  Planner p(pc);
  CycleResult r = p.cycle(ego_at(0.0, 6.0, 15.0), {vehicle(0, 0, 40.0, 12.0)});
  const auto best = r.plan.best_index;
  MetaCostSpec scaled = pc.meta;
  scaled.w1 *= 3.7;
  scaled.w2 *= 3.7;
  for (Candidate& c : r.plan.candidates) c.meta_cost = meta_cost(c.traj, scaled);
  EXPECT_EQ(rank_candidates(r.plan.candidates), best);
}

TEST_F(PlannerRun, BrakeFallbackWhenNothingPasses) {
  PlannerConfig pc = config();
  pc.limits.residual_tol = -1.0;
  pc.limits.relaxed_residual_tol = -1.0;
  pc.fallback = FallbackMode::Brake;
  Planner p(pc);
  const CycleResult r = p.cycle(ego_at(0.0, 6.0, 15.0), {});
  EXPECT_FALSE(r.plan.best_index.has_value());
  EXPECT_EQ(r.fallback, Fallback::Emergency);
  EXPECT_DOUBLE_EQ(r.command.accel, -pc.a_max);
  EXPECT_EQ(r.command.steering, 0.0);
}
