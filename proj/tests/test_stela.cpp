#include "stela/stela.hpp"

#include <gtest/gtest.h>

#include <map>
#include <sstream>

using namespace stela;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec x(static_cast<int>(v.size()));
  int i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

// Constant-velocity LTV trajectory along y = 1 starting at x = 1.
DesiredTrajectory straight_plan(const DynamicsModel& m, int edges, double dt = 0.5) {
  DesiredTrajectory t;
  t.model_id = m.name();
  t.nodes.push_back({GroupElement::rn(vec({1.0, 1.0})), vec({0.3, 0.0})});
  for (int i = 0; i < edges; ++i) {
    t.edges.push_back({vec({0.0, 0.0}), dt});
    t.nodes.push_back(step(m, t.nodes.back(), t.edges.back().u, dt));
  }
  return t;
}

struct Fixture {
  ModelPtr model = make_model("ltv_sde");
  std::shared_ptr<const Scene> scene = std::make_shared<Scene>(make_scene(SceneKind::kSimpleObstacle, 1));
  DistanceOraclePtr sdf = std::make_shared<SdfGrid>(build_sdf(*scene));

  StelaController make(int edges, WindowConfig cfg = {}) {
    DesiredTrajectory t = straight_plan(*model, edges);
    GoalRegion goal{t.nodes.back().q, 0.5, 0.3};
    return StelaController(std::move(t), model, scene, goal, cfg, sdf);
  }
};

std::map<FactorKind, int> kinds(const FactorGraph& g) {
  std::map<FactorKind, int> out;
  for (const auto& [id, f] : g.factors()) ++out[f->kind()];
  return out;
}

std::map<Role, int> roles(const FactorGraph& g) {
  std::map<Role, int> out;
  for (const auto& [k, v] : g.values()) ++out[k.role];
  return out;
}

}  // namespace

TEST(Stela, PlanIsClearOfObstacleActivation) {
  Fixture fx;
  const DesiredTrajectory t = straight_plan(*fx.model, 12);
  for (const auto& n : t.nodes) EXPECT_GT(exact_clearance(*fx.scene, position_of(n.q)).distance, 0.4);
}

TEST(Stela, SingleEdgeWindowHasOneDynamicsBundle) {
  Fixture fx;
  WindowConfig cfg;
  cfg.n_fwd = 1;
  StelaController c = fx.make(5, cfg);
  const auto r = roles(c.graph());
  EXPECT_EQ(r.at(Role::kQ), 2);
  EXPECT_EQ(r.at(Role::kQdot), 2);
  EXPECT_EQ(r.at(Role::kU), 1);
  EXPECT_EQ(r.at(Role::kDt), 1);
  const auto k = kinds(c.graph());
  EXPECT_EQ(k.at(FactorKind::kIntegration), 1);
  EXPECT_EQ(k.at(FactorKind::kDynamics), 1);
  EXPECT_EQ(k.at(FactorKind::kObstacle), 2);
  EXPECT_EQ(k.at(FactorKind::kPrior), 5);
  EXPECT_EQ(k.at(FactorKind::kLimits), 2);
  EXPECT_EQ(c.graph().num_factors(), 11u);
}

TEST(Stela, FixedDurationsRemoveDurationVariables) {
  Fixture fx;
  WindowConfig cfg;
  cfg.time_as_variable = false;
  StelaController c = fx.make(5, cfg);
  EXPECT_EQ(roles(c.graph()).count(Role::kDt), 0u);
  EXPECT_EQ(c.dt_estimate(0), 0.5);
}

TEST(Stela, NoiselessPlanHasZeroInitialCost) {
  Fixture fx;
  StelaController c = fx.make(12);
  EXPECT_LT(c.graph().cost(), 1e-24);
  EXPECT_EQ(c.window_begin(), 0);
  EXPECT_EQ(c.window_end(), 10);
}

TEST(Stela, WindowTruncatedAtPlanEnd) {
  Fixture fx;
  StelaController c = fx.make(3);
  EXPECT_EQ(c.window_end(), 3);
  EXPECT_EQ(roles(c.graph()).at(Role::kQ), 4);
}

TEST(Stela, NoiselessTicksReturnPlannedControls) {
  Fixture fx;
  StelaController c = fx.make(8);
  for (int i = 0; i < 60; ++i) {
    const double now = i / 30.0;
    const ControlCommand cmd = c.tick(now);
    if (cmd.stopped) break;
    EXPECT_NEAR(cmd.u.norm(), 0.0, 1e-12);
    EXPECT_NEAR(cmd.dt_estimate, 0.5, 1e-12);
    EXPECT_EQ(c.audit().violations, 0);
  }
}

TEST(Stela, ObservationPullsEstimateTowardMeasurement) {
  Fixture fx;
  StelaController c = fx.make(8);
  const GroupElement before = c.pose_estimate(0.0);
  ObservationMsg z{GroupElement::rn(vec({1.0, 1.2})), 0.0};
  c.tick(0.0, std::span<const ObservationMsg>(&z, 1));
  const GroupElement after = c.pose_estimate(0.0);
  EXPECT_GE(after.coeffs()[1] - before.coeffs()[1], 0.05);
  EXPECT_LE(after.coeffs()[1], 1.2 + 1e-9);
  EXPECT_EQ(c.audit().violations, 0);
}

TEST(Stela, ObservationBeforeCurrentEdgeIsDropped) {
  Fixture fx;
  StelaController c = fx.make(8);
  c.tick(0.0);
  c.tick(0.5);
  ASSERT_EQ(c.curr(), 1);
  const std::size_t factors = c.graph().num_factors();
  c.ingest_observation({GroupElement::rn(vec({1.05, 1.0})), 0.2});
  EXPECT_EQ(c.dropped_observations(), 1);
  EXPECT_EQ(c.graph().num_factors(), factors);
  c.ingest_observation({GroupElement::rn(vec({1.2, 1.0})), 0.55});
  EXPECT_EQ(c.dropped_observations(), 1);
  EXPECT_EQ(c.graph().num_factors(), factors + 1);
}

TEST(Stela, SolverFailureFallsBackToPlannedControl) {
  Fixture fx;
  DesiredTrajectory t = straight_plan(*fx.model, 6);
  t.edges[0].u = vec({0.1, -0.05});
  t = split_edges(*fx.model, t, 0.5);
  GoalRegion goal{t.nodes.back().q, 0.5, 0.3};
  StelaController c(t, fx.model, fx.scene, goal, WindowConfig{}, fx.sdf);
  c.inject_solver_failure(true);
  const ControlCommand cmd = c.tick(0.0);
  EXPECT_TRUE(cmd.degraded);
  EXPECT_EQ(cmd.u, t.edges[0].u);
  EXPECT_EQ(cmd.dt_estimate, t.edges[0].dt);
  EXPECT_EQ(c.degraded_ticks(), 1);
  c.inject_solver_failure(false);
  EXPECT_FALSE(c.tick(1.0 / 30).degraded);
}

TEST(Stela, RunsToPlanEndWithBoundedWindow) {
  Fixture fx;
  WindowConfig cfg;
  cfg.n_fwd = 4;
  cfg.n_hist = 3;
  DesiredTrajectory t = straight_plan(*fx.model, 20);
  // Goal far away so only plan exhaustion stops the controller.
  GoalRegion goal{GroupElement::rn(vec({9.0, 9.0})), 0.5, 0.3};
  StelaController c(t, fx.model, fx.scene, goal, cfg, fx.sdf);
  bool stopped = false;
  std::size_t max_vars = 0;
  for (int i = 0; i < 400 && !stopped; ++i) {
    const double now = i / 30.0;
    const GroupElement truth = GroupElement::rn(vec({1.0 + 0.3 * now, 1.0}));
    ObservationMsg z{truth, now};
    const ControlCommand cmd = c.tick(now, std::span<const ObservationMsg>(&z, 1));
    const AuditReport a = c.audit();
    ASSERT_EQ(a.violations, 0) << (a.messages.empty() ? "" : a.messages.front());
    max_vars = std::max(max_vars, c.graph().num_variables());
    EXPECT_LE(c.window_end() - c.window_begin(), cfg.n_fwd + cfg.n_hist);
    stopped = cmd.stopped;
  }
  EXPECT_TRUE(stopped);
  EXPECT_TRUE(c.finished());
  // Q, Qdot per node plus U, Dt per horizon edge.
  EXPECT_LE(max_vars, static_cast<std::size_t>(2 * (cfg.n_fwd + cfg.n_hist + 1) + 2 * cfg.n_fwd));
  EXPECT_GE(c.pose_estimate(10.0).coeffs()[0], 1.0 + 0.3 * 9.9);
}

TEST(Stela, TraceCsvHasOneRowPerTick) {
  Fixture fx;
  StelaController c = fx.make(4);
  for (int i = 0; i < 10; ++i) c.tick(i / 30.0);
  std::ostringstream out;
  c.write_trace_csv(out);
  const std::string s = out.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 11);
  EXPECT_EQ(s.rfind("time,curr,", 0), 0u);
}

TEST(Stela, RejectsUnsplitTrajectory) {
  Fixture fx;
  DesiredTrajectory t = straight_plan(*fx.model, 2, 1.0);
  GoalRegion goal{t.nodes.back().q, 0.5, 0.3};
  EXPECT_THROW(StelaController(t, fx.model, fx.scene, goal, WindowConfig{}, fx.sdf), UsageError);
}
