#pragma once

#include "stela/factor_graph.hpp"
#include "stela/models.hpp"
#include "stela/world.hpp"

#include <optional>
#include <variant>

namespace stela {

/// Diagonal noise (residual units) per factor type.
struct NoiseSpec {
  double integration = 0.01;
  double dynamics = 0.05;
  double observation = 0.05;
  double q_prior_position = 0.05;
  double q_prior_rotation = 0.05;
  double qdot_prior = 0.2;
  double dt_prior = 0.02;
  double obstacle = 0.01;
  double limits = 0.001;

  void validate() const;
};

// Residuals ------------------------------------------------------------------

/// Log(Between(q * Exp(qdot dt), q_next))
Vec integration_residual(const GroupElement& q_next, const GroupElement& q, const Tangent& qdot, double dt);
/// (qdot + f(u, qdot) dt) - qdot_next
Vec dynamics_residual(const Vec& qdot_next, const Vec& qdot, const Vec& u, double dt, const DynamicsModel& model);
/// Log(Between(q * Exp(qdot dt_z), z))
Vec observation_residual(const GroupElement& q, const Tangent& qdot, const GroupElement& z, double dt_z);
/// Log(Between(v, prior)); for vectors this is prior - v.
Vec prior_residual(const GroupElement& v, const GroupElement& prior);
/// eps - d when d <= eps, else 0.
double obstacle_residual(double distance, double eps);
/// Signed per-coordinate excess: v - upper above, v - lower below, 0 inside.
Vec limits_residual(const Vec& v, const Vec& lower, const Vec& upper);

// Factors ---------------------------------------------------------------------

/// A variable argument or a baked-in constant.
using ScalarArg = std::variant<VariableKey, double>;
using VectorArg = std::variant<VariableKey, Vec>;

class IntegrationFactor final : public Factor {
 public:
  IntegrationFactor(VariableKey q_next, VariableKey q, VariableKey qdot, ScalarArg dt, Manifold manifold, int dim,
                    double sigma);
  Eigen::VectorXd residual(ValueRefs v) const override;
  bool has_analytic_jacobians() const override { return manifold_ == Manifold::kRn; }
  void analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const override;

 private:
  double dt_value(ValueRefs v) const;
  Manifold manifold_;
  std::optional<double> fixed_dt_;
};

class DynamicsFactor final : public Factor {
 public:
  DynamicsFactor(VariableKey qdot_next, VariableKey qdot, VectorArg u, ScalarArg dt, ModelPtr model, double sigma);
  Eigen::VectorXd residual(ValueRefs v) const override;
  bool has_analytic_jacobians() const override { return true; }
  void analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const override;

 private:
  Vec u_value(ValueRefs v) const;
  double dt_value(ValueRefs v) const;
  ModelPtr model_;
  std::optional<Vec> fixed_u_;
  std::optional<double> fixed_dt_;
};

class ObservationFactor final : public Factor {
 public:
  ObservationFactor(VariableKey q, VariableKey qdot, GroupElement z, double dt_z, Eigen::VectorXd sigmas);
  Eigen::VectorXd residual(ValueRefs v) const override;
  bool has_analytic_jacobians() const override { return z_.manifold() == Manifold::kRn; }
  void analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const override;
  double dt_z() const { return dt_z_; }
  const GroupElement& measurement() const { return z_; }

 private:
  GroupElement z_;
  double dt_z_;
};

class PriorFactor final : public Factor {
 public:
  PriorFactor(VariableKey key, GroupElement prior, Eigen::VectorXd sigmas);
  Eigen::VectorXd residual(ValueRefs v) const override;
  bool has_analytic_jacobians() const override { return prior_.manifold() == Manifold::kRn; }
  void analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const override;
  const GroupElement& prior() const { return prior_; }

 private:
  GroupElement prior_;
};

class ObstacleFactor final : public Factor {
 public:
  ObstacleFactor(VariableKey q, DistanceOraclePtr field, double eps, double sigma);
  Eigen::VectorXd residual(ValueRefs v) const override;
  bool has_analytic_jacobians() const override { return true; }
  void analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const override;

 private:
  DistanceOraclePtr field_;
  double eps_;
};

class LimitsFactor final : public Factor {
 public:
  LimitsFactor(VariableKey key, Vec lower, Vec upper, double sigma);
  Eigen::VectorXd residual(ValueRefs v) const override;
  bool has_analytic_jacobians() const override { return true; }
  void analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const override;

 private:
  Vec lower_;
  Vec upper_;
};

/// Sigmas for a configuration prior: position then rotation (SE2) or position only.
Eigen::VectorXd q_prior_sigmas(const NoiseSpec& n, Manifold m, int dim);
/// Observation sigmas; SE2 heading uses half the positional sigma.
Eigen::VectorXd observation_sigmas(double sigma_z, Manifold m, int dim);

}  // namespace stela
