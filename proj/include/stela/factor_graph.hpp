#pragma once

#include "stela/lie.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stela {

enum class Role : std::uint8_t { kQ, kQdot, kU, kDt, kParam };

struct VariableKey {
  Role role = Role::kQ;
  int index = 0;

  // Natural order: by node index, then role.
  friend auto operator<=>(const VariableKey& a, const VariableKey& b) {
    if (auto c = a.index <=> b.index; c != 0) return c;
    return a.role <=> b.role;
  }
  friend bool operator==(const VariableKey&, const VariableKey&) = default;
};

inline VariableKey Q(int i) { return {Role::kQ, i}; }
inline VariableKey Qdot(int i) { return {Role::kQdot, i}; }
inline VariableKey U(int i) { return {Role::kU, i}; }
inline VariableKey Dt(int i) { return {Role::kDt, i}; }
inline VariableKey Param(int i) { return {Role::kParam, i}; }

std::string to_string(const VariableKey& k);

enum class FactorKind : std::uint8_t {
  kIntegration,
  kDynamics,
  kObservation,
  kPrior,
  kObstacle,
  kLimits,
  kGeneric,
};

std::string to_string(FactorKind k);

using ValueRefs = std::span<const GroupElement* const>;

/// A residual over an ordered list of variables, weighted coordinate-wise by
/// 1/sigma. Jacobians are taken with respect to the right-retraction tangent
/// coordinates of each argument.
class Factor {
 public:
  Factor(FactorKind kind, std::vector<VariableKey> keys, Eigen::VectorXd sigmas);
  virtual ~Factor() = default;

  FactorKind kind() const { return kind_; }
  const std::vector<VariableKey>& keys() const { return keys_; }
  const Eigen::VectorXd& sigmas() const { return sigmas_; }
  int dim() const { return static_cast<int>(sigmas_.size()); }

  virtual Eigen::VectorXd residual(ValueRefs values) const = 0;

  /// Override together with analytic_jacobians().
  virtual bool has_analytic_jacobians() const { return false; }
  virtual void analytic_jacobians(ValueRefs values, std::vector<Eigen::MatrixXd>& jacobians) const;

  /// Unwhitened residual and Jacobians (analytic when available).
  void linearize(ValueRefs values, Eigen::VectorXd& r, std::vector<Eigen::MatrixXd>& jacobians) const;

 private:
  FactorKind kind_;
  std::vector<VariableKey> keys_;
  Eigen::VectorXd sigmas_;
};

using FactorPtr = std::shared_ptr<const Factor>;
using FactorId = std::uint64_t;

/// Central differences on the tangent coordinates of each argument.
std::vector<Eigen::MatrixXd> numeric_jacobian(const Factor& f, ValueRefs values, double step = 1e-6);

struct SolverConfig {
  int max_iterations = 100;
  double relative_decrease_tol = 1e-8;
  // Convergence also requires the last step to be small relative to the estimate.
  double relative_step_tol = 1e-6;
  double gradient_tol = 1e-10;
  // Whitened cost treated as an exact fit.
  double absolute_cost_tol = 1e-20;
  double lambda_initial = 1e-4;
  double lambda_min = 1e-10;
  double lambda_max = 1e4;
  int dense_limit = 500;
};

enum class SolveStatus { kConverged, kMaxIterations, kFailure };

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  SolveStatus status = SolveStatus::kConverged;
  double wall_time_s = 0.0;
  std::string message;
};

class SingularInformationError : public std::runtime_error {
 public:
  SingularInformationError(VariableKey key, const std::string& what)
      : std::runtime_error(what), key_(key) {}
  VariableKey key() const { return key_; }

 private:
  VariableKey key_;
};

/// Nonlinear least-squares problem over manifold-valued variables.
/// Single-writer; distinct instances are independent.
class FactorGraph {
 public:
  void add_variable(VariableKey key, const GroupElement& initial);
  void remove_variable(VariableKey key);
  bool has_variable(VariableKey key) const { return values_.contains(key); }
  const GroupElement& estimate(VariableKey key) const;
  void set_estimate(VariableKey key, const GroupElement& value);

  FactorId add_factor(FactorPtr factor);
  void remove_factor(FactorId id);
  bool has_factor(FactorId id) const { return factors_.contains(id); }
  const Factor& factor(FactorId id) const;

  std::size_t num_variables() const { return values_.size(); }
  std::size_t num_factors() const { return factors_.size(); }
  const std::map<VariableKey, GroupElement>& values() const { return values_; }
  const std::map<FactorId, FactorPtr>& factors() const { return factors_; }
  /// Number of active factors referencing the key.
  int references(VariableKey key) const;

  /// 0.5 * sum of squared whitened residuals at the current estimates.
  double cost() const;
  /// Whitened residual of one factor at the current estimates.
  Eigen::VectorXd whitened_residual(FactorId id) const;

  /// Levenberg-Marquardt from the current estimates. Never throws on numerical
  /// trouble; failures are reported through SolveReport::status.
  SolveReport solve(const SolverConfig& config = {});

  /// Block of the inverse Gauss-Newton information at the current estimates.
  Eigen::MatrixXd marginal_covariance(VariableKey key) const;
  std::vector<Eigen::MatrixXd> marginal_covariances(std::span<const VariableKey> keys,
                                                    int dense_limit = 500) const;

  /// Deterministic dump of variables, factors and residuals.
  nlohmann::json to_json() const;

 private:
  struct Layout;
  Layout layout() const;

  std::map<VariableKey, GroupElement> values_;
  std::map<FactorId, FactorPtr> factors_;
  std::map<VariableKey, int> refs_;
  FactorId next_id_ = 0;
};

}  // namespace stela
