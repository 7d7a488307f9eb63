#include "stela/factor_graph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <chrono>
#include <cmath>
#include <limits>

namespace stela {

std::string to_string(const VariableKey& k) {
  static constexpr const char* kNames[] = {"q", "qdot", "u", "dt", "p"};
  return kNames[static_cast<int>(k.role)] + std::to_string(k.index);
}

std::string to_string(FactorKind k) {
  switch (k) {
    case FactorKind::kIntegration: return "integration";
    case FactorKind::kDynamics: return "dynamics";
    case FactorKind::kObservation: return "observation";
    case FactorKind::kPrior: return "prior";
    case FactorKind::kObstacle: return "obstacle";
    case FactorKind::kLimits: return "limits";
    case FactorKind::kGeneric: return "generic";
  }
  return "unknown";
}

Factor::Factor(FactorKind kind, std::vector<VariableKey> keys, Eigen::VectorXd sigmas)
    : kind_(kind), keys_(std::move(keys)), sigmas_(std::move(sigmas)) {
  if (keys_.empty()) throw UsageError("factor without variables");
  if (sigmas_.size() == 0 || (sigmas_.array() <= 0.0).any()) {
    throw UsageError("factor sigmas must be positive");
  }
}

void Factor::analytic_jacobians(ValueRefs, std::vector<Eigen::MatrixXd>&) const {
  throw UsageError("factor has no analytic Jacobians");
}

void Factor::linearize(ValueRefs values, Eigen::VectorXd& r, std::vector<Eigen::MatrixXd>& jacobians) const {
  r = residual(values);
  if (has_analytic_jacobians()) {
    jacobians.resize(keys_.size());
    analytic_jacobians(values, jacobians);
  } else {
    jacobians = numeric_jacobian(*this, values);
  }
}

std::vector<Eigen::MatrixXd> numeric_jacobian(const Factor& f, ValueRefs values, double step) {
  std::vector<GroupElement> local_values;
  local_values.reserve(values.size());
  for (const auto* v : values) local_values.push_back(*v);
  std::vector<const GroupElement*> refs(local_values.size());
  for (std::size_t i = 0; i < local_values.size(); ++i) refs[i] = &local_values[i];

  std::vector<Eigen::MatrixXd> out(values.size());
  for (std::size_t a = 0; a < values.size(); ++a) {
    const GroupElement base = local_values[a];
    const int n = base.dim();
    out[a].resize(f.dim(), n);
    for (int c = 0; c < n; ++c) {
      Vec d = Vec::Zero(n);
      d[c] = step;
      local_values[a] = retract(base, d);
      const Eigen::VectorXd plus = f.residual(refs);
      local_values[a] = retract(base, -d);
      const Eigen::VectorXd minus = f.residual(refs);
      out[a].col(c) = (plus - minus) / (2.0 * step);
    }
    local_values[a] = base;
  }
  return out;
}

// ---------------------------------------------------------------------------

struct FactorGraph::Layout {
  std::vector<VariableKey> keys;
  std::vector<int> offsets;
  std::vector<int> dims;
  std::map<VariableKey, int> slot;
  int total = 0;
};

FactorGraph::Layout FactorGraph::layout() const {
  Layout l;
  for (const auto& [key, value] : values_) {
    l.slot[key] = static_cast<int>(l.keys.size());
    l.keys.push_back(key);
    l.offsets.push_back(l.total);
    l.dims.push_back(value.dim());
    l.total += value.dim();
  }
  return l;
}

void FactorGraph::add_variable(VariableKey key, const GroupElement& initial) {
  if (values_.contains(key)) throw UsageError("duplicate variable " + to_string(key));
  values_.emplace(key, initial);
}

void FactorGraph::remove_variable(VariableKey key) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown variable " + to_string(key));
  if (references(key) > 0) {
    throw UsageError("variable " + to_string(key) + " still referenced by active factors");
  }
  values_.erase(it);
  refs_.erase(key);
}

const GroupElement& FactorGraph::estimate(VariableKey key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown variable " + to_string(key));
  return it->second;
}

void FactorGraph::set_estimate(VariableKey key, const GroupElement& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown variable " + to_string(key));
  if (!it->second.same_space(value)) throw UsageError("estimate dimension change for " + to_string(key));
  it->second = value;
}

FactorId FactorGraph::add_factor(FactorPtr factor) {
  if (!factor) throw UsageError("null factor");
  for (const auto& k : factor->keys()) {
    if (!values_.contains(k)) throw UsageError("factor references unknown variable " + to_string(k));
  }
  for (const auto& k : factor->keys()) ++refs_[k];
  const FactorId id = next_id_++;
  factors_.emplace(id, std::move(factor));
  return id;
}

void FactorGraph::remove_factor(FactorId id) {
  auto it = factors_.find(id);
  if (it == factors_.end()) throw UsageError("unknown factor id " + std::to_string(id));
  for (const auto& k : it->second->keys()) --refs_[k];
  factors_.erase(it);
}

const Factor& FactorGraph::factor(FactorId id) const {
  auto it = factors_.find(id);
  if (it == factors_.end()) throw UsageError("unknown factor id " + std::to_string(id));
  return *it->second;
}

int FactorGraph::references(VariableKey key) const {
  auto it = refs_.find(key);
  return it == refs_.end() ? 0 : it->second;
}

namespace {

using RefList = std::vector<const GroupElement*>;

void gather(const std::map<VariableKey, GroupElement>& values, const Factor& f, RefList& refs) {
  refs.resize(f.keys().size());
  for (std::size_t i = 0; i < refs.size(); ++i) refs[i] = &values.at(f.keys()[i]);
}

double factor_cost(const std::map<VariableKey, GroupElement>& values, const Factor& f, RefList& refs) {
  gather(values, f, refs);
  const Eigen::VectorXd r = f.residual(refs).cwiseQuotient(f.sigmas());
  return 0.5 * r.squaredNorm();
}

double total_cost(const std::map<VariableKey, GroupElement>& values,
                  const std::map<FactorId, FactorPtr>& factors) {
  RefList refs;
  double c = 0.0;
  for (const auto& [id, f] : factors) c += factor_cost(values, *f, refs);
  return c;
}

struct NormalEquations {
  bool dense = true;
  Eigen::MatrixXd h_dense;
  Eigen::SparseMatrix<double> h_sparse;
  Eigen::VectorXd g;  // J^T r (whitened)
  double cost = 0.0;
  bool finite = true;
};

}  // namespace

namespace {

template <typename LayoutT>
NormalEquations assemble(const std::map<VariableKey, GroupElement>& values,
                         const std::map<FactorId, FactorPtr>& factors, const LayoutT& l, int dense_limit) {
  NormalEquations ne;
  ne.dense = l.total <= dense_limit;
  ne.g = Eigen::VectorXd::Zero(l.total);
  std::vector<Eigen::Triplet<double>> triplets;
  if (ne.dense) {
    ne.h_dense = Eigen::MatrixXd::Zero(l.total, l.total);
  }

  RefList refs;
  Eigen::VectorXd r;
  std::vector<Eigen::MatrixXd> jac;
  std::vector<int> slots;
  for (const auto& [id, f] : factors) {
    gather(values, *f, refs);
    f->linearize(refs, r, jac);
    const Eigen::VectorXd inv_sigma = f->sigmas().cwiseInverse();
    r = r.cwiseProduct(inv_sigma);
    if (!r.allFinite()) {
      ne.finite = false;
      return ne;
    }
    ne.cost += 0.5 * r.squaredNorm();
    slots.resize(f->keys().size());
    for (std::size_t a = 0; a < slots.size(); ++a) {
      slots[a] = l.slot.at(f->keys()[a]);
      jac[a] = inv_sigma.asDiagonal() * jac[a];
      if (!jac[a].allFinite()) {
        ne.finite = false;
        return ne;
      }
    }
    for (std::size_t a = 0; a < slots.size(); ++a) {
      const int oa = l.offsets[slots[a]];
      const int da = l.dims[slots[a]];
      ne.g.segment(oa, da) += jac[a].transpose() * r;
      for (std::size_t b = 0; b < slots.size(); ++b) {
        const int ob = l.offsets[slots[b]];
        const int db = l.dims[slots[b]];
        const Eigen::MatrixXd blk = jac[a].transpose() * jac[b];
        if (ne.dense) {
          ne.h_dense.block(oa, ob, da, db) += blk;
        } else {
          for (int i = 0; i < da; ++i) {
            for (int j = 0; j < db; ++j) {
              if (blk(i, j) != 0.0) triplets.emplace_back(oa + i, ob + j, blk(i, j));
            }
          }
        }
      }
    }
  }
  if (!ne.dense) {
    ne.h_sparse.resize(l.total, l.total);
    ne.h_sparse.setFromTriplets(triplets.begin(), triplets.end());
  }
  return ne;
}

bool solve_damped(const NormalEquations& ne, double lambda, Eigen::VectorXd& delta) {
  const int n = static_cast<int>(ne.g.size());
  if (ne.dense) {
    Eigen::MatrixXd a = ne.h_dense;
    a.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) return false;
    delta = llt.solve(-ne.g);
  } else {
    Eigen::SparseMatrix<double> a = ne.h_sparse;
    Eigen::SparseMatrix<double> id(n, n);
    id.setIdentity();
    a += lambda * id;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(a);
    if (llt.info() != Eigen::Success) return false;
    delta = llt.solve(-ne.g);
  }
  return delta.allFinite();
}

}  // namespace

double FactorGraph::cost() const { return total_cost(values_, factors_); }

Eigen::VectorXd FactorGraph::whitened_residual(FactorId id) const {
  const Factor& f = factor(id);
  RefList refs;
  gather(values_, f, refs);
  return f.residual(refs).cwiseQuotient(f.sigmas());
}

SolveReport FactorGraph::solve(const SolverConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  SolveReport report;
  auto finish = [&](SolveStatus status, std::string message) {
    report.status = status;
    report.converged = status == SolveStatus::kConverged;
    report.message = std::move(message);
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
  };

  const Layout l = layout();
  NormalEquations ne = assemble(values_, factors_, l, config.dense_limit);
  if (!ne.finite) return finish(SolveStatus::kFailure, "non-finite residual or Jacobian");
  report.initial_cost = report.final_cost = ne.cost;
  if (l.total == 0 || factors_.empty()) return finish(SolveStatus::kConverged, "empty problem");

  double lambda = config.lambda_initial;
  std::map<VariableKey, GroupElement> candidate;
  Eigen::VectorXd delta;
  for (report.iterations = 0; report.iterations < config.max_iterations;) {
    if (ne.g.norm() < config.gradient_tol) return finish(SolveStatus::kConverged, "gradient below tolerance");
    if (ne.cost <= config.absolute_cost_tol) return finish(SolveStatus::kConverged, "cost below tolerance");

    bool accepted = false;
    double new_cost = ne.cost;
    while (!accepted) {
      if (!solve_damped(ne, lambda, delta)) {
        if (lambda >= config.lambda_max) {
          return finish(SolveStatus::kFailure, "indeterminate linear system at maximum damping");
        }
        lambda = std::min(lambda * 10.0, config.lambda_max);
        continue;
      }
      candidate = values_;
      for (std::size_t s = 0; s < l.keys.size(); ++s) {
        auto& v = candidate.at(l.keys[s]);
        v = retract(v, delta.segment(l.offsets[s], l.dims[s]));
      }
      new_cost = total_cost(candidate, factors_);
      if (std::isfinite(new_cost) && new_cost < ne.cost) {
        accepted = true;
        lambda = std::max(lambda / 10.0, config.lambda_min);
      } else {
        if (lambda >= config.lambda_max) {
          // No descent direction left at maximum damping: local minimum.
          return finish(SolveStatus::kConverged, "no decrease at maximum damping");
        }
        lambda = std::min(lambda * 10.0, config.lambda_max);
      }
    }

    values_.swap(candidate);
    ++report.iterations;
    const double decrease = ne.cost - new_cost;
    report.final_cost = new_cost;
    double x_norm = 0.0;
    for (const auto& [k, v] : values_) x_norm += v.coeffs().squaredNorm();
    const bool small = decrease <= config.relative_decrease_tol * ne.cost &&
                       delta.norm() <= config.relative_step_tol * (std::sqrt(x_norm) + config.relative_step_tol);
    ne = assemble(values_, factors_, l, config.dense_limit);
    if (!ne.finite) return finish(SolveStatus::kFailure, "non-finite residual or Jacobian");
    report.final_cost = ne.cost;
    if (small || ne.cost <= config.absolute_cost_tol) return finish(SolveStatus::kConverged, "relative decrease below tolerance");
  }
  return finish(SolveStatus::kMaxIterations, "maximum iterations reached");
}

namespace {

VariableKey culprit_dense(const Eigen::MatrixXd& h, const std::vector<VariableKey>& keys,
                          const std::vector<int>& offsets, const std::vector<int>& dims) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const Eigen::VectorXd v = es.eigenvectors().col(0);
  int best = 0;
  double best_w = -1.0;
  for (std::size_t s = 0; s < keys.size(); ++s) {
    const double w = v.segment(offsets[s], dims[s]).norm();
    if (w > best_w + 1e-12) {
      best_w = w;
      best = static_cast<int>(s);
    }
  }
  return keys[best];
}

}  // namespace

Eigen::MatrixXd FactorGraph::marginal_covariance(VariableKey key) const {
  const std::array<VariableKey, 1> k{key};
  return marginal_covariances(k).front();
}

std::vector<Eigen::MatrixXd> FactorGraph::marginal_covariances(std::span<const VariableKey> keys,
                                                               int dense_limit) const {
  const Layout l = layout();
  for (const auto& k : keys) {
    if (!l.slot.contains(k)) throw UsageError("unknown variable " + to_string(k));
  }
  const NormalEquations ne = assemble(values_, factors_, l, dense_limit);
  if (!ne.finite) throw std::runtime_error("marginal_covariance: non-finite linearization");

  constexpr double kRelPivot = 1e-12;
  std::vector<Eigen::MatrixXd> out;
  out.reserve(keys.size());
  auto rhs_for = [&](VariableKey k) {
    const int s = l.slot.at(k);
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(l.total, l.dims[s]);
    e.block(l.offsets[s], 0, l.dims[s], l.dims[s]).setIdentity();
    return std::pair{s, e};
  };

  if (ne.dense) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ne.h_dense);
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || dmax == 0.0 || d.minCoeff() <= kRelPivot * dmax) {
      const VariableKey bad = culprit_dense(ne.h_dense, l.keys, l.offsets, l.dims);
      throw SingularInformationError(bad, "singular information; unconstrained variable " + to_string(bad));
    }
    for (const auto& k : keys) {
      auto [s, e] = rhs_for(k);
      const Eigen::MatrixXd x = ldlt.solve(e);
      out.push_back(x.block(l.offsets[s], 0, l.dims[s], l.dims[s]));
    }
    return out;
  }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::NaturalOrdering<int>> ldlt(ne.h_sparse);
  Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.size() ? d.cwiseAbs().maxCoeff() : 0.0;
  if (ldlt.info() != Eigen::Success || dmax == 0.0 || d.minCoeff() <= kRelPivot * dmax) {
    Eigen::Index pivot = 0;
    d.minCoeff(&pivot);
    VariableKey bad = l.keys.front();
    for (std::size_t s = 0; s < l.keys.size(); ++s) {
      if (pivot >= l.offsets[s] && pivot < l.offsets[s] + l.dims[s]) bad = l.keys[s];
    }
    throw SingularInformationError(bad, "singular information; unconstrained variable " + to_string(bad));
  }
  for (const auto& k : keys) {
    auto [s, e] = rhs_for(k);
    const Eigen::MatrixXd x = ldlt.solve(e);
    out.push_back(x.block(l.offsets[s], 0, l.dims[s], l.dims[s]));
  }
  return out;
}

nlohmann::json FactorGraph::to_json() const {
  nlohmann::json j;
  j["variables"] = nlohmann::json::array();
  for (const auto& [key, v] : values_) {
    std::vector<double> c(v.coeffs().data(), v.coeffs().data() + v.dim());
    j["variables"].push_back({{"key", to_string(key)},
                              {"manifold", v.manifold() == Manifold::kSE2 ? "SE2" : "Rn"},
                              {"value", c}});
  }
  j["factors"] = nlohmann::json::array();
  for (const auto& [id, f] : factors_) {
    std::vector<std::string> ks;
    for (const auto& k : f->keys()) ks.push_back(to_string(k));
    const Eigen::VectorXd r = whitened_residual(id);
    j["factors"].push_back({{"id", id},
                            {"kind", to_string(f->kind())},
                            {"keys", ks},
                            {"sigmas", std::vector<double>(f->sigmas().data(), f->sigmas().data() + f->dim())},
                            {"whitened_residual", std::vector<double>(r.data(), r.data() + r.size())}});
  }
  j["cost"] = cost();
  return j;
}

}  // namespace stela
