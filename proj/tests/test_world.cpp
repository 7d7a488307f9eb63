#include "stela/world.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace stela;

namespace {

// Distance to a rectangle by dense sampling of its boundary.
double sampled_rect_distance(const Rect& r, const Eigen::Vector2d& p) {
  const double c = std::cos(r.angle), s = std::sin(r.angle);
  const int n = 4000;
  double best = 1e9;
  for (int i = 0; i < n; ++i) {
    const double t = -1.0 + 2.0 * i / (n - 1);
    const Eigen::Vector2d locals[4] = {{t * r.half_extents.x(), r.half_extents.y()},
                                       {t * r.half_extents.x(), -r.half_extents.y()},
                                       {r.half_extents.x(), t * r.half_extents.y()},
                                       {-r.half_extents.x(), t * r.half_extents.y()}};
    for (const auto& l : locals) {
      const Eigen::Vector2d w = r.center + Eigen::Vector2d(c * l.x() - s * l.y(), s * l.x() + c * l.y());
      best = std::min(best, (w - p).norm());
    }
  }
  const Eigen::Vector2d d = p - r.center;
  const Eigen::Vector2d local(c * d.x() + s * d.y(), -s * d.x() + c * d.y());
  const bool inside = std::abs(local.x()) < r.half_extents.x() && std::abs(local.y()) < r.half_extents.y();
  return inside ? -best : best;
}

}  // namespace

TEST(World, RectDistanceMatchesBoundarySampling) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-3, 3);
  const Rect r{{0.5, -0.2}, {1.0, 0.4}, 0.6};
  for (int i = 0; i < 300; ++i) {
    const Eigen::Vector2d p(d(rng), d(rng));
    EXPECT_NEAR(obstacle_distance(r, p), sampled_rect_distance(r, p), 2e-3);
  }
}

TEST(World, DiscDistanceAndGradient) {
  const Disc c{{1.0, 1.0}, 0.5};
  Eigen::Vector2d g;
  EXPECT_DOUBLE_EQ(obstacle_distance(c, {3.0, 1.0}, &g), 1.5);
  EXPECT_DOUBLE_EQ(g.x(), 1.0);
  EXPECT_DOUBLE_EQ(obstacle_distance(c, {1.0, 1.25}), -0.25);
}

TEST(World, SdfWithinOneCellDiagonalOfExact) {
  for (const SceneKind k : {SceneKind::kSimpleObstacle, SceneKind::kForest, SceneKind::kBugTrap}) {
    const Scene s = make_scene(k, 3);
    const SdfGrid sdf = build_sdf(s, 0.05);
    const double diag = 0.05 * std::sqrt(2.0);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> x(s.lower.x(), s.upper.x()), y(s.lower.y(), s.upper.y());
    for (int i = 0; i < 2000; ++i) {
      const Eigen::Vector2d p(x(rng), y(rng));
      EXPECT_LE(std::abs(sdf.clearance(p) - exact_clearance(s, p).distance), diag) << to_string(k);
    }
  }
}

TEST(World, ParallelSdfEqualsSerialReference) {
  const Scene s = make_scene(SceneKind::kForest, 9);
  const SdfGrid a = build_sdf(s, 0.1);
  const SdfGrid b = build_sdf_reference(s, 0.1);
  EXPECT_EQ(a.values(), b.values());
}

TEST(World, SdfOutsideGridIsInfiniteAndCounted) {
  const Scene s = make_scene(SceneKind::kSimpleObstacle, 0);
  const SdfGrid sdf = build_sdf(s, 0.1, 0.5);
  EXPECT_TRUE(std::isinf(sdf.clearance({-50.0, 0.0})));
  EXPECT_TRUE(std::isinf(sdf.clearance({0.0, 80.0})));
  EXPECT_EQ(sdf.out_of_bounds_queries(), 2u);
}

TEST(World, ForestIsDeterministicAndRespectsSpacing) {
  const Scene a = make_scene(SceneKind::kForest, 42);
  const Scene b = make_scene(SceneKind::kForest, 42);
  const Scene c = make_scene(SceneKind::kForest, 43);
  EXPECT_EQ(scene_to_json(a).dump(), scene_to_json(b).dump());
  EXPECT_NE(scene_to_json(a).dump(), scene_to_json(c).dump());
  ASSERT_EQ(a.obstacles.size(), 25u);
  for (std::size_t i = 0; i < a.obstacles.size(); ++i) {
    const auto& di = std::get<Disc>(a.obstacles[i]);
    EXPECT_GE(di.radius, 0.3);
    EXPECT_LE(di.radius, 0.6);
    for (std::size_t j = i + 1; j < a.obstacles.size(); ++j) {
      const auto& dj = std::get<Disc>(a.obstacles[j]);
      EXPECT_GE((di.center - dj.center).norm() - di.radius - dj.radius, 1.2);
    }
  }
  for (const auto& q : a.queries) {
    EXPECT_FALSE(collides(a, q.start.head<2>()));
    EXPECT_FALSE(collides(a, q.goal.head<2>()));
  }
}

TEST(World, SceneJsonRoundTrip) {
  for (const SceneKind k : {SceneKind::kEmpty, SceneKind::kSimpleObstacle, SceneKind::kForest, SceneKind::kBugTrap}) {
    const Scene s = make_scene(k, 5);
    const Scene back = scene_from_json(scene_to_json(s));
    EXPECT_EQ(scene_to_json(back).dump(), scene_to_json(s).dump());
    EXPECT_EQ(scene_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(make_scene("volcano", 1), UsageError);
}

TEST(World, SimpleObstacleBlocksStraightLine) {
  const Scene s = make_scene(SceneKind::kSimpleObstacle, 0);
  const auto& q = s.queries.front();
  EXPECT_TRUE(segment_collides(s, q.start.head<2>(), q.goal.head<2>()));
  EXPECT_FALSE(segment_collides(s, {1.5, 8.0}, {8.5, 8.0}));
}

TEST(World, BugTrapStartAndGoalAreFree) {
  const Scene s = make_scene(SceneKind::kBugTrap, 0);
  const auto& q = s.queries.front();
  EXPECT_FALSE(collides(s, q.start.head<2>()));
  EXPECT_FALSE(collides(s, q.goal.head<2>()));
  EXPECT_TRUE(segment_collides(s, q.start.head<2>(), q.goal.head<2>()));
}

TEST(World, ObstaclesWithinIsSortedAndThresholded) {
  const Scene s = make_scene(SceneKind::kForest, 1);
  const auto& d0 = std::get<Disc>(s.obstacles[0]);
  const Eigen::Vector2d p = d0.center + Eigen::Vector2d(d0.radius + 0.3, 0.0);
  const auto near = obstacles_within(s, p, 0.3);
  ASSERT_FALSE(near.empty());
  EXPECT_EQ(near.front().first, 0);
  EXPECT_NEAR(near.front().second, 0.3 - s.footprint_radius, 1e-12);
}

TEST(World, GoalRegionWeightsAngle) {
  GoalRegion g{GroupElement::se2(1, 1, 0)};
  EXPECT_TRUE(g.contains(GroupElement::se2(1.3, 1, 0)));
  EXPECT_FALSE(g.contains(GroupElement::se2(1.6, 1, 0)));
  EXPECT_TRUE(g.contains(GroupElement::se2(1, 1, 1.0)));
  EXPECT_FALSE(g.contains(GroupElement::se2(1, 1, std::numbers::pi)));
}
