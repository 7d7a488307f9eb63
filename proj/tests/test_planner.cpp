#include "stela/planner.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace stela;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec x(static_cast<int>(v.size()));
  int i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

State random_state(std::mt19937_64& rng, bool se2) {
  std::uniform_real_distribution<double> p(-1.0, 11.0);
  std::uniform_real_distribution<double> v(-0.6, 0.6);
  if (se2) return {GroupElement::se2(p(rng), p(rng), 3.0 * v(rng)), vec({v(rng), 0.5 * v(rng), v(rng)})};
  return {GroupElement::rn(vec({p(rng), p(rng)})), vec({v(rng), v(rng)})};
}

}  // namespace

TEST(Planner, GridNearestMatchesBruteForce) {
  for (bool se2 : {false, true}) {
    std::mt19937_64 rng(se2 ? 11 : 12);
    MotionTree tree({0, 0}, {10, 10});
    for (int i = 0; i < 2000; ++i) tree.add({random_state(rng, se2), -1, Vec::Zero(2), 0.0, 0, 0.0});
    // Duplicates exercise the lowest-id tie rule.
    for (int i = 0; i < 50; ++i) tree.add(tree.node(i));
    for (int q = 0; q < 1000; ++q) {
      const State x = random_state(rng, se2);
      ASSERT_EQ(tree.nearest(x), tree.nearest_brute_force(x)) << "query " << q;
    }
  }
}

TEST(Planner, SplitEdgesKeepsExactRollout) {
  LtvSdeModel m;
  DesiredTrajectory t;
  t.nodes.push_back({GroupElement::rn(vec({1, 1})), vec({0.1, 0})});
  t.edges.push_back({vec({0.1, -0.05}), 1.2});
  t.nodes.push_back(step(m, t.nodes[0], t.edges[0].u, 1.2));
  const DesiredTrajectory s = split_edges(m, t, 0.5);
  ASSERT_EQ(s.num_edges(), 3);
  for (const auto& e : s.edges) EXPECT_NEAR(e.dt, 0.4, 1e-15);
  EXPECT_LT(rollout_error(m, s), 1e-15);
  EXPECT_NEAR(s.duration(), 1.2, 1e-12);
  const DesiredTrajectory again = split_edges(m, s, 0.5);
  ASSERT_EQ(again.num_edges(), s.num_edges());
  for (int i = 0; i <= s.num_edges(); ++i) {
    EXPECT_EQ(again.nodes[i].q.coeffs(), s.nodes[i].q.coeffs());
    EXPECT_EQ(again.nodes[i].qdot, s.nodes[i].qdot);
  }
}

TEST(Planner, EmptySceneSucceedsWithExactRollout) {
  const Scene scene = make_scene(SceneKind::kEmpty, 0);
  PlannerConfig cfg;
  cfg.max_iterations = 60000;
  for (const char* id : {"ltv_sde", "mushr"}) {
    auto model = make_model(id);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const PlanResult r = plan(*model, scene, {1, 1, 0}, {8, 7, 0}, seed, cfg);
      ASSERT_TRUE(r.success) << id << " seed " << seed;
      EXPECT_LT(rollout_error(*model, r.trajectory), 1e-12);
      for (const auto& e : r.trajectory.edges) EXPECT_LE(e.dt, model->edge_threshold() * (1 + 1e-12));
      EXPECT_FALSE(trajectory_collides(scene, r.trajectory));
    }
  }
}

TEST(Planner, SameSeedSamePlan) {
  const Scene scene = make_scene(SceneKind::kSimpleObstacle, 1);
  auto model = make_model("ltv_sde");
  const auto& q = scene.queries.front();
  const PlanResult a = plan(*model, scene, q.start, q.goal, 3);
  const PlanResult b = plan(*model, scene, q.start, q.goal, 3);
  EXPECT_EQ(trajectory_to_json(a.trajectory).dump(), trajectory_to_json(b.trajectory).dump());
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Planner, StartInsideObstacleIsRejected) {
  const Scene scene = make_scene(SceneKind::kSimpleObstacle, 1);
  auto model = make_model("ltv_sde");
  const Obstacle& o = scene.obstacles.front();
  const Eigen::Vector2d c = std::visit([](const auto& s) { return s.center; }, o);
  EXPECT_THROW(plan(*model, scene, {c.x(), c.y(), 0}, {9, 9, 0}, 0), UsageError);
}

TEST(Planner, PlansAvoidObstaclesWithMargin) {
  auto model = make_model("ltv_sde");
  for (auto kind : {SceneKind::kSimpleObstacle, SceneKind::kBugTrap}) {
    const Scene scene = make_scene(kind, 1);
    const auto& q = scene.queries.front();
    PlannerConfig cfg;
    cfg.max_iterations = 150000;
    PlanResult r;
    for (std::uint64_t seed = 0; seed < 5 && !r.success; ++seed) r = plan(*model, scene, q.start, q.goal, seed, cfg);
    ASSERT_TRUE(r.success) << to_string(kind);
    EXPECT_FALSE(trajectory_collides(scene, r.trajectory, 0.01, cfg.clearance_margin - 0.005));
    EXPECT_LT(rollout_error(*model, r.trajectory), 1e-12);
  }
}

TEST(Planner, StraightLineThroughBugTrapCollides) {
  const Scene scene = make_scene(SceneKind::kBugTrap, 1);
  auto model = make_model("ltv_sde");
  const auto& q = scene.queries.front();
  const DesiredTrajectory t = straight_line_trajectory(*model, q.start, q.goal);
  EXPECT_TRUE(trajectory_collides(scene, t));
  EXPECT_LT(rollout_error(*model, t), 1e-12);
}

TEST(Planner, TrajectoryJsonRoundTrip) {
  auto model = make_model("mushr");
  const Scene scene = make_scene(SceneKind::kEmpty, 0);
  const PlanResult r = plan(*model, scene, {1, 1, 0.3}, {6, 6, 0}, 1);
  ASSERT_TRUE(r.success);
  const nlohmann::json j = trajectory_to_json(r.trajectory);
  const DesiredTrajectory back = trajectory_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(trajectory_to_json(back).dump(), j.dump());
  ASSERT_EQ(back.num_edges(), r.trajectory.num_edges());
  EXPECT_EQ(back.duration(), r.trajectory.duration());
}

TEST(Planner, LargerBudgetNeverLosesSuccess) {
  const Scene scene = make_scene(SceneKind::kSimpleObstacle, 1);
  auto model = make_model("ltv_sde");
  const auto& q = scene.queries.front();
  bool found = false;
  for (int budget : {2000, 8000, 32000, 128000}) {
    PlannerConfig cfg;
    cfg.max_iterations = budget;
    const PlanResult r = plan(*model, scene, q.start, q.goal, 2, cfg);
    if (found) EXPECT_TRUE(r.success) << budget;
    found = found || r.success;
  }
  EXPECT_TRUE(found);
}
