#include "stela/factor_graph.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <random>

using namespace stela;

namespace {

// r = A * [x_0; x_1; ...] + b over R^n variables.
class AffineFactor final : public Factor {
 public:
  AffineFactor(std::vector<VariableKey> keys, std::vector<Eigen::MatrixXd> a, Eigen::VectorXd b, Eigen::VectorXd sig)
      : Factor(FactorKind::kGeneric, std::move(keys), std::move(sig)), a_(std::move(a)), b_(std::move(b)) {}

  Eigen::VectorXd residual(ValueRefs v) const override {
    Eigen::VectorXd r = b_;
    for (std::size_t i = 0; i < a_.size(); ++i) r += a_[i] * Eigen::VectorXd(v[i]->coeffs());
    return r;
  }
  bool has_analytic_jacobians() const override { return true; }
  void analytic_jacobians(ValueRefs, std::vector<Eigen::MatrixXd>& j) const override { j = a_; }

 private:
  std::vector<Eigen::MatrixXd> a_;
  Eigen::VectorXd b_;
};

// r = x^2 - c, numeric Jacobians only.
class SquareFactor final : public Factor {
 public:
  SquareFactor(VariableKey k, double c) : Factor(FactorKind::kGeneric, {k}, Eigen::VectorXd::Ones(1)), c_(c) {}
  Eigen::VectorXd residual(ValueRefs v) const override {
    const double x = v[0]->coeffs()[0];
    return Eigen::VectorXd::Constant(1, x * x - c_);
  }

 private:
  double c_;
};

class NanFactor final : public Factor {
 public:
  explicit NanFactor(VariableKey k) : Factor(FactorKind::kGeneric, {k}, Eigen::VectorXd::Ones(1)) {}
  Eigen::VectorXd residual(ValueRefs) const override { return Eigen::VectorXd::Constant(1, std::nan("")); }
};

GroupElement rn(std::initializer_list<double> v) {
  Vec x(static_cast<int>(v.size()));
  int i = 0;
  for (double d : v) x[i++] = d;
  return GroupElement::rn(x);
}

struct AffineProblem {
  FactorGraph graph;
  Eigen::MatrixXd a;  // stacked whitened design
  Eigen::VectorXd b;
  int n = 0;
};

// Random chain of affine factors; solution via dense QR of the stacked system.
AffineProblem random_affine(std::mt19937_64& rng, int vars, int dim) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> sig(0.1, 2.0);
  AffineProblem p;
  p.n = vars * dim;
  std::vector<Eigen::MatrixXd> rows_a;
  std::vector<Eigen::VectorXd> rows_b;
  for (int i = 0; i < vars; ++i) p.graph.add_variable(Param(i), GroupElement::rn(Vec::Zero(dim)));
  auto add = [&](std::vector<int> idx, int m) {
    std::vector<Eigen::MatrixXd> blocks;
    std::vector<VariableKey> keys;
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(m, p.n);
    for (int k : idx) {
      Eigen::MatrixXd blk = Eigen::MatrixXd::NullaryExpr(m, dim, [&]() { return nd(rng); });
      blocks.push_back(blk);
      keys.push_back(Param(k));
      full.block(0, k * dim, m, dim) += blk;
    }
    Eigen::VectorXd b = Eigen::VectorXd::NullaryExpr(m, [&]() { return nd(rng); });
    Eigen::VectorXd s = Eigen::VectorXd::NullaryExpr(m, [&]() { return sig(rng); });
    p.graph.add_factor(std::make_shared<AffineFactor>(keys, blocks, b, s));
    rows_a.push_back(s.cwiseInverse().asDiagonal() * full);
    rows_b.push_back(b.cwiseQuotient(s));
  };
  for (int i = 0; i < vars; ++i) add({i}, dim);
  for (int i = 0; i + 1 < vars; ++i) add({i, i + 1}, dim + 1);
  int rows = 0;
  for (auto& r : rows_a) rows += static_cast<int>(r.rows());
  p.a.resize(rows, p.n);
  p.b.resize(rows);
  int o = 0;
  for (std::size_t i = 0; i < rows_a.size(); ++i) {
    p.a.middleRows(o, rows_a[i].rows()) = rows_a[i];
    p.b.segment(o, rows_b[i].size()) = rows_b[i];
    o += static_cast<int>(rows_a[i].rows());
  }
  return p;
}

Eigen::VectorXd stacked(const FactorGraph& g, int vars) {
  Eigen::VectorXd x(0);
  for (int i = 0; i < vars; ++i) {
    const Vec& c = g.estimate(Param(i)).coeffs();
    x.conservativeResize(x.size() + c.size());
    x.tail(c.size()) = c;
  }
  return x;
}

}  // namespace

TEST(FactorGraph, AddRemoveBookkeeping) {
  FactorGraph g;
  g.add_variable(Q(0), rn({0, 0}));
  EXPECT_THROW(g.add_variable(Q(0), rn({1, 1})), UsageError);
  const FactorId id = g.add_factor(std::make_shared<SquareFactor>(Q(0), 1.0));
  EXPECT_EQ(g.references(Q(0)), 1);
  EXPECT_THROW(g.remove_variable(Q(0)), UsageError);
  EXPECT_THROW(g.add_factor(std::make_shared<SquareFactor>(Q(5), 1.0)), UsageError);
  g.remove_factor(id);
  EXPECT_EQ(g.references(Q(0)), 0);
  g.remove_variable(Q(0));
  EXPECT_EQ(g.num_variables(), 0u);
  EXPECT_THROW(g.remove_factor(id), UsageError);
  EXPECT_THROW(g.estimate(Q(0)), UsageError);
}

TEST(FactorGraph, KeysOrderByIndexThenRole) {
  EXPECT_LT(Q(0), Qdot(0));
  EXPECT_LT(Dt(0), Q(1));
  EXPECT_LT(U(3), Dt(3));
}

TEST(FactorGraph, LevenbergMarquardtMatchesClosedFormLeastSquares) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    AffineProblem p = random_affine(rng, 2 + trial % 5, 1 + trial % 3);
    const Eigen::VectorXd expected = p.a.colPivHouseholderQr().solve(-p.b);
    const SolveReport rep = p.graph.solve();
    EXPECT_EQ(rep.status, SolveStatus::kConverged) << rep.message;
    const Eigen::VectorXd got = stacked(p.graph, static_cast<int>(p.graph.num_variables()));
    EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(rep.final_cost, 0.5 * (p.a * expected + p.b).squaredNorm(), 1e-8);
  }
}

TEST(FactorGraph, SparsePathMatchesDense) {
  std::mt19937_64 rng(5);
  AffineProblem p = random_affine(rng, 40, 3);
  FactorGraph copy = p.graph;
  SolverConfig sparse;
  sparse.dense_limit = 10;
  p.graph.solve();
  copy.solve(sparse);
  EXPECT_LT((stacked(p.graph, 40) - stacked(copy, 40)).cwiseAbs().maxCoeff(), 1e-9);

  const std::array<VariableKey, 2> keys{Param(3), Param(17)};
  const auto dense_cov = p.graph.marginal_covariances(keys);
  const auto sparse_cov = copy.marginal_covariances(keys, 10);
  for (int i = 0; i < 2; ++i) EXPECT_LT((dense_cov[i] - sparse_cov[i]).cwiseAbs().maxCoeff(), 1e-9);

  // Covariance equals the corresponding block of (A^T A)^-1.
  const Eigen::MatrixXd full = (p.a.transpose() * p.a).inverse();
  EXPECT_LT((dense_cov[1] - full.block(51, 51, 3, 3)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FactorGraph, NonlinearNumericJacobianSolve) {
  FactorGraph g;
  g.add_variable(Q(0), rn({3.0}));
  g.add_factor(std::make_shared<SquareFactor>(Q(0), 2.0));
  const SolveReport rep = g.solve();
  EXPECT_TRUE(rep.converged);
  EXPECT_NEAR(g.estimate(Q(0)).coeffs()[0], std::sqrt(2.0), 1e-6);
  EXPECT_LT(rep.final_cost, rep.initial_cost);
}

TEST(FactorGraph, ExactFitStopsWithoutIterating) {
  FactorGraph g;
  g.add_variable(Q(0), rn({std::sqrt(2.0) + 1e-12}));
  g.add_factor(std::make_shared<SquareFactor>(Q(0), 2.0));
  const SolveReport rep = g.solve();
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.iterations, 0);
}

TEST(FactorGraph, NumericJacobianMatchesAnalytic) {
  std::mt19937_64 rng(9);
  AffineProblem p = random_affine(rng, 3, 2);
  for (const auto& [id, f] : p.graph.factors()) {
    std::vector<const GroupElement*> refs;
    for (const auto& k : f->keys()) refs.push_back(&p.graph.estimate(k));
    std::vector<Eigen::MatrixXd> an;
    f->analytic_jacobians(refs, an);
    const auto num = numeric_jacobian(*f, refs);
    for (std::size_t i = 0; i < an.size(); ++i) EXPECT_LT((an[i] - num[i]).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(FactorGraph, SingleVariableMarginalIsInverseInformation) {
  const double s1 = 0.3, s2 = 0.7;
  FactorGraph g;
  g.add_variable(Q(0), rn({0.0, 0.0}));
  g.add_factor(std::make_shared<AffineFactor>(std::vector{Q(0)}, std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Identity(2, 2)},
                                              Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, s1)));
  EXPECT_NEAR(g.marginal_covariance(Q(0))(0, 0), s1 * s1, 1e-12);
  g.add_factor(std::make_shared<AffineFactor>(std::vector{Q(0)}, std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Identity(2, 2)},
                                              Eigen::VectorXd::Ones(2), Eigen::VectorXd::Constant(2, s2)));
  const Eigen::MatrixXd c = g.marginal_covariance(Q(0));
  const double expected = 1.0 / (1.0 / (s1 * s1) + 1.0 / (s2 * s2));
  EXPECT_NEAR(c(0, 0), expected, 1e-12);
  EXPECT_NEAR(c(1, 1), expected, 1e-12);
  EXPECT_NEAR(c(0, 1), 0.0, 1e-12);
}

TEST(FactorGraph, UnconstrainedVariableIsNamed) {
  FactorGraph g;
  g.add_variable(Q(0), rn({1.0}));
  g.add_variable(U(0), rn({0.0}));
  g.add_factor(std::make_shared<SquareFactor>(Q(0), -1.0));
  try {
    g.marginal_covariance(Q(0));
    FAIL() << "expected singular information";
  } catch (const SingularInformationError& e) {
    EXPECT_EQ(e.key(), U(0));
  }
  try {
    g.marginal_covariances(std::array{Q(0)}, 0);
    FAIL() << "expected singular information";
  } catch (const SingularInformationError& e) {
    EXPECT_EQ(e.key(), U(0));
  }
}

TEST(FactorGraph, NonFiniteResidualReportsFailure) {
  FactorGraph g;
  g.add_variable(Q(0), rn({0.0}));
  g.add_factor(std::make_shared<NanFactor>(Q(0)));
  const SolveReport rep = g.solve();
  EXPECT_EQ(rep.status, SolveStatus::kFailure);
  EXPECT_FALSE(rep.converged);
}

TEST(FactorGraph, JsonDumpIsDeterministic) {
  std::mt19937_64 a(1), b(1);
  AffineProblem p = random_affine(a, 3, 2);
  AffineProblem q = random_affine(b, 3, 2);
  EXPECT_EQ(p.graph.to_json().dump(), q.graph.to_json().dump());
  const auto j = p.graph.to_json();
  EXPECT_EQ(j["variables"].size(), 3u);
  EXPECT_EQ(j["factors"].size(), 5u);
}
