#include "stela/lie.hpp"

#include <Eigen/LU>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace stela;

namespace {

constexpr double kPi = std::numbers::pi;

// Integrates a constant body twist with explicit Euler on the pose.
Eigen::Vector3d euler_integrate(double vx, double vy, double w, double T, int steps) {
  double x = 0, y = 0, th = 0;
  const double h = T / steps;
  for (int i = 0; i < steps; ++i) {
    x += h * (std::cos(th) * vx - std::sin(th) * vy);
    y += h * (std::sin(th) * vx + std::cos(th) * vy);
    th += h * w;
  }
  return {x, y, th};
}

GroupElement random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-5, 5), ang(-kPi, kPi);
  return GroupElement::se2(pos(rng), pos(rng), ang(rng));
}

void expect_near(const GroupElement& a, const GroupElement& b, double tol) {
  ASSERT_TRUE(a.same_space(b));
  Eigen::VectorXd d = local(a, b);
  EXPECT_LT(d.cwiseAbs().maxCoeff(), tol) << to_string(a) << " vs " << to_string(b);
}

}  // namespace

TEST(Lie, ExpOfQuarterTurnMatchesEulerIntegration) {
  const Eigen::Vector3d ref = euler_integrate(1.0, 0.0, kPi / 2, 1.0, 1000000);
  const GroupElement g = exp_map(Tangent::se2(1.0, 0.0, kPi / 2));
  EXPECT_NEAR(g.x(), ref.x(), 1e-6);
  EXPECT_NEAR(g.y(), ref.y(), 1e-6);
  EXPECT_NEAR(g.theta(), ref.z(), 1e-6);
  EXPECT_NEAR(g.x(), 2 / kPi, 1e-12);
  EXPECT_NEAR(g.y(), 2 / kPi, 1e-12);
}

TEST(Lie, ZeroTangentIsIdentity) {
  const GroupElement g = exp_map(Tangent::se2(0, 0, 0));
  EXPECT_EQ(g.coeffs(), Vec::Zero(3));
  const Tangent t = log_map(GroupElement::identity(Manifold::kSE2, 3));
  EXPECT_EQ(t.vector(), Vec::Zero(3));
}

TEST(Lie, RnExpAndLogAreIdentity) {
  Vec v(2);
  v << 0.3, -0.1;
  EXPECT_EQ(exp_map(Tangent::rn(v)).coeffs(), v);
  EXPECT_EQ(log_map(GroupElement::rn(v)).vector(), v);
}

TEST(Lie, LogInvertsQuarterTurn) {
  const Tangent t = log_map(GroupElement::se2(2 / kPi, 2 / kPi, kPi / 2));
  EXPECT_NEAR(t[0], 1.0, 1e-12);
  EXPECT_NEAR(t[1], 0.0, 1e-12);
  EXPECT_NEAR(t[2], kPi / 2, 1e-12);
}

TEST(Lie, BetweenMatchesHomogeneousMatrices) {
  const GroupElement a = GroupElement::se2(0, 0, kPi / 2);
  const GroupElement b = GroupElement::se2(1, 0, kPi / 2);
  const Eigen::Matrix3d m = to_matrix(a).inverse() * to_matrix(b);
  const GroupElement d = between(a, b);
  EXPECT_NEAR(d.x(), m(0, 2), 1e-12);
  EXPECT_NEAR(d.y(), m(1, 2), 1e-12);
  EXPECT_NEAR(d.theta(), std::atan2(m(1, 0), m(0, 0)), 1e-12);
  EXPECT_NEAR(d.x(), 0.0, 1e-12);
  EXPECT_NEAR(d.y(), -1.0, 1e-12);

  const GroupElement t = between(GroupElement::se2(1, 0, 0), GroupElement::se2(2, 0, 0));
  expect_near(t, GroupElement::se2(1, 0, 0), 1e-12);
}

TEST(Lie, BetweenRejectsMixedSpaces) {
  EXPECT_THROW(between(GroupElement::se2(0, 0, 0), GroupElement::rn(Vec::Zero(2))), UsageError);
  EXPECT_THROW(between(GroupElement::rn(Vec::Zero(2)), GroupElement::rn(Vec::Zero(3))), UsageError);
}

TEST(Lie, IntegrateCases) {
  const GroupElement q = GroupElement::se2(1, 2, 0.3);
  expect_near(integrate(q, Tangent::se2(1, 2, 3), 0.0), q, 1e-15);
  Vec v(2);
  v << 0.2, 0.2;
  const GroupElement r = integrate(GroupElement::rn(Vec::Zero(2)), Tangent::rn(v), 1.0);
  EXPECT_NEAR(r.coeffs()[0], 0.2, 1e-15);
  EXPECT_NEAR(r.coeffs()[1], 0.2, 1e-15);
  expect_near(integrate(GroupElement::identity(Manifold::kSE2, 3), Tangent::se2(1, 0, kPi / 2), 1.0),
              GroupElement::se2(2 / kPi, 2 / kPi, kPi / 2), 1e-12);
  EXPECT_THROW(integrate(q, Tangent::se2(1, 0, 0), -0.1), UsageError);
}

TEST(Lie, AnglesAreWrappedOnConstruction) {
  EXPECT_NEAR(GroupElement::se2(0, 0, 3 * kPi).theta(), kPi, 1e-12);
  EXPECT_NEAR(GroupElement::se2(0, 0, -kPi).theta(), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(-3 * kPi / 2), kPi / 2, 1e-12);
}

TEST(LieProperty, GroupAxioms) {
  std::mt19937_64 rng(7);
  const GroupElement e = GroupElement::identity(Manifold::kSE2, 3);
  for (int i = 0; i < 1000; ++i) {
    const GroupElement a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    expect_near(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9);
    expect_near(compose(a, e), a, 1e-9);
    expect_near(compose(e, a), a, 1e-9);
    expect_near(compose(a, inverse(a)), e, 1e-9);
    expect_near(compose(a, between(a, b)), b, 1e-9);
  }
}

TEST(LieProperty, ExpLogRoundTrips) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lin(-3, 3), ang(-kPi + 1e-3, kPi - 1e-3), tiny(-1e-7, 1e-7);
  for (int i = 0; i < 1000; ++i) {
    const double th = (i % 10 == 0) ? tiny(rng) : ang(rng);
    const Tangent t = Tangent::se2(lin(rng), lin(rng), th);
    const Tangent back = log_map(exp_map(t));
    EXPECT_LT((back.vector() - t.vector()).cwiseAbs().maxCoeff(), 1e-9);

    const GroupElement g = random_pose(rng);
    expect_near(exp_map(log_map(g)), g, 1e-9);
  }
}

TEST(LieProperty, FlowProperty) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> lin(-2, 2), dt(0, 1.5);
  for (int i = 0; i < 1000; ++i) {
    const GroupElement q = random_pose(rng);
    const Tangent v = Tangent::se2(lin(rng), lin(rng), lin(rng));
    const double a = dt(rng), b = dt(rng);
    expect_near(integrate(q, v, a + b), integrate(integrate(q, v, a), v, b), 1e-9);
  }
}
