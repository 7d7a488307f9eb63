#include "stela/factors.hpp"

#include <cmath>
#include <optional>

namespace stela {

void NoiseSpec::validate() const {
  for (double s : {integration, dynamics, observation, q_prior_position, q_prior_rotation, qdot_prior, dt_prior,
                   obstacle, limits}) {
    if (!(s > 0.0)) throw UsageError("noise sigmas must be positive");
  }
}

Vec integration_residual(const GroupElement& q_next, const GroupElement& q, const Tangent& qdot, double dt) {
  const GroupElement pred = compose(q, exp_map(qdot.scaled(dt)));
  return local(pred, q_next);
}

Vec dynamics_residual(const Vec& qdot_next, const Vec& qdot, const Vec& u, double dt, const DynamicsModel& model) {
  return qdot + model.local_acceleration(u, qdot) * dt - qdot_next;
}

Vec observation_residual(const GroupElement& q, const Tangent& qdot, const GroupElement& z, double dt_z) {
  return integration_residual(z, q, qdot, dt_z);
}

Vec prior_residual(const GroupElement& v, const GroupElement& prior) { return local(v, prior); }

double obstacle_residual(double distance, double eps) { return distance <= eps ? eps - distance : 0.0; }

Vec limits_residual(const Vec& v, const Vec& lower, const Vec& upper) {
  Vec r = Vec::Zero(v.size());
  for (int i = 0; i < v.size(); ++i) {
    if (v[i] >= upper[i]) {
      r[i] = v[i] - upper[i];
    } else if (v[i] <= lower[i]) {
      r[i] = v[i] - lower[i];
    }
  }
  return r;
}

Eigen::VectorXd q_prior_sigmas(const NoiseSpec& n, Manifold m, int dim) {
  Eigen::VectorXd s = Eigen::VectorXd::Constant(dim, n.q_prior_position);
  if (m == Manifold::kSE2) s[2] = n.q_prior_rotation;
  return s;
}

Eigen::VectorXd observation_sigmas(double sigma_z, Manifold m, int dim) {
  Eigen::VectorXd s = Eigen::VectorXd::Constant(dim, sigma_z);
  if (m == Manifold::kSE2) s[2] = 0.5 * sigma_z;
  return s;
}

namespace {

std::vector<VariableKey> with_optional(std::vector<VariableKey> keys, const ScalarArg& a) {
  if (const auto* k = std::get_if<VariableKey>(&a)) keys.push_back(*k);
  return keys;
}

Eigen::VectorXd to_dynamic(const Vec& v) { return Eigen::VectorXd(v); }

}  // namespace

// Integration -------------------------------------------------------------------

IntegrationFactor::IntegrationFactor(VariableKey q_next, VariableKey q, VariableKey qdot, ScalarArg dt,
                                     Manifold manifold, int dim, double sigma)
    : Factor(FactorKind::kIntegration, with_optional({q_next, q, qdot}, dt), Eigen::VectorXd::Constant(dim, sigma)),
      manifold_(manifold) {
  if (const auto* d = std::get_if<double>(&dt)) fixed_dt_ = *d;
}

double IntegrationFactor::dt_value(ValueRefs v) const { return fixed_dt_ ? *fixed_dt_ : v[3]->coeffs()[0]; }

Eigen::VectorXd IntegrationFactor::residual(ValueRefs v) const {
  return to_dynamic(integration_residual(*v[0], *v[1], Tangent(manifold_, v[2]->coeffs()), dt_value(v)));
}

void IntegrationFactor::analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const {
  const int n = dim();
  const double dt = dt_value(v);
  j.resize(keys().size());
  j[0] = Eigen::MatrixXd::Identity(n, n);
  j[1] = -Eigen::MatrixXd::Identity(n, n);
  j[2] = -dt * Eigen::MatrixXd::Identity(n, n);
  if (!fixed_dt_) j[3] = -Eigen::VectorXd(v[2]->coeffs());
}

// Dynamics ----------------------------------------------------------------------

namespace {

std::vector<VariableKey> dynamics_keys(VariableKey a, VariableKey b, const VectorArg& u, const ScalarArg& dt) {
  std::vector<VariableKey> keys{a, b};
  if (const auto* k = std::get_if<VariableKey>(&u)) keys.push_back(*k);
  if (const auto* k = std::get_if<VariableKey>(&dt)) keys.push_back(*k);
  return keys;
}

}  // namespace

DynamicsFactor::DynamicsFactor(VariableKey qdot_next, VariableKey qdot, VectorArg u, ScalarArg dt, ModelPtr model,
                               double sigma)
    : Factor(FactorKind::kDynamics, dynamics_keys(qdot_next, qdot, u, dt),
             Eigen::VectorXd::Constant(model->config_dim(), sigma)),
      model_(std::move(model)) {
  if (const auto* c = std::get_if<Vec>(&u)) fixed_u_ = *c;
  if (const auto* d = std::get_if<double>(&dt)) fixed_dt_ = *d;
}

Vec DynamicsFactor::u_value(ValueRefs v) const { return fixed_u_ ? *fixed_u_ : v[2]->coeffs(); }

double DynamicsFactor::dt_value(ValueRefs v) const {
  if (fixed_dt_) return *fixed_dt_;
  return v[fixed_u_ ? 2 : 3]->coeffs()[0];
}

Eigen::VectorXd DynamicsFactor::residual(ValueRefs v) const {
  return to_dynamic(dynamics_residual(v[0]->coeffs(), v[1]->coeffs(), u_value(v), dt_value(v), *model_));
}

void DynamicsFactor::analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const {
  const int n = dim();
  const Vec u = u_value(v);
  const Vec& qdot = v[1]->coeffs();
  const double dt = dt_value(v);
  Eigen::MatrixXd d_u;
  Eigen::MatrixXd d_qdot;
  model_->acceleration_jacobians(u, qdot, d_u, d_qdot);
  j.resize(keys().size());
  j[0] = -Eigen::MatrixXd::Identity(n, n);
  j[1] = Eigen::MatrixXd::Identity(n, n) + d_qdot * dt;
  int next = 2;
  if (!fixed_u_) j[next++] = d_u * dt;
  if (!fixed_dt_) j[next] = Eigen::VectorXd(model_->local_acceleration(u, qdot));
}

// Observation -------------------------------------------------------------------

ObservationFactor::ObservationFactor(VariableKey q, VariableKey qdot, GroupElement z, double dt_z,
                                     Eigen::VectorXd sigmas)
    : Factor(FactorKind::kObservation, {q, qdot}, std::move(sigmas)), z_(std::move(z)), dt_z_(dt_z) {
  if (dim() != z_.dim()) throw UsageError("observation sigma dimension mismatch");
}

Eigen::VectorXd ObservationFactor::residual(ValueRefs v) const {
  return to_dynamic(observation_residual(*v[0], Tangent(z_.manifold(), v[1]->coeffs()), z_, dt_z_));
}

void ObservationFactor::analytic_jacobians(ValueRefs, std::vector<Eigen::MatrixXd>& j) const {
  const int n = dim();
  j.resize(2);
  j[0] = -Eigen::MatrixXd::Identity(n, n);
  j[1] = -dt_z_ * Eigen::MatrixXd::Identity(n, n);
}

// Prior ---------------------------------------------------------------------------

PriorFactor::PriorFactor(VariableKey key, GroupElement prior, Eigen::VectorXd sigmas)
    : Factor(FactorKind::kPrior, {key}, std::move(sigmas)), prior_(std::move(prior)) {
  if (dim() != prior_.dim()) throw UsageError("prior sigma dimension mismatch");
}

Eigen::VectorXd PriorFactor::residual(ValueRefs v) const { return to_dynamic(prior_residual(*v[0], prior_)); }

void PriorFactor::analytic_jacobians(ValueRefs, std::vector<Eigen::MatrixXd>& j) const {
  j.assign(1, -Eigen::MatrixXd::Identity(dim(), dim()));
}

// Obstacle ------------------------------------------------------------------------

ObstacleFactor::ObstacleFactor(VariableKey q, DistanceOraclePtr field, double eps, double sigma)
    : Factor(FactorKind::kObstacle, {q}, Eigen::VectorXd::Constant(1, sigma)), field_(std::move(field)), eps_(eps) {
  if (!field_) throw UsageError("obstacle factor needs a distance oracle");
}

Eigen::VectorXd ObstacleFactor::residual(ValueRefs v) const {
  return Eigen::VectorXd::Constant(1, obstacle_residual(field_->clearance(position_of(*v[0])), eps_));
}

void ObstacleFactor::analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const {
  const GroupElement& q = *v[0];
  Eigen::Vector2d grad;
  const double d = field_->clearance(position_of(q), &grad);
  j.assign(1, Eigen::MatrixXd::Zero(1, q.dim()));
  if (!(d <= eps_)) return;
  if (q.manifold() == Manifold::kSE2) {
    // Position moves by R(theta) * (dx, dy) under right perturbation.
    const double c = std::cos(q.theta());
    const double s = std::sin(q.theta());
    j[0](0, 0) = -(grad.x() * c + grad.y() * s);
    j[0](0, 1) = -(-grad.x() * s + grad.y() * c);
  } else {
    j[0](0, 0) = -grad.x();
    j[0](0, 1) = -grad.y();
  }
}

// Limits --------------------------------------------------------------------------

LimitsFactor::LimitsFactor(VariableKey key, Vec lower, Vec upper, double sigma)
    : Factor(FactorKind::kLimits, {key}, Eigen::VectorXd::Constant(lower.size(), sigma)),
      lower_(std::move(lower)),
      upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) throw UsageError("limits: bound size mismatch");
  if ((lower_.array() > upper_.array()).any()) throw UsageError("limits: lower exceeds upper");
}

Eigen::VectorXd LimitsFactor::residual(ValueRefs v) const { return to_dynamic(limits_residual(v[0]->coeffs(), lower_, upper_)); }

void LimitsFactor::analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const {
  const Vec& x = v[0]->coeffs();
  j.assign(1, Eigen::MatrixXd::Zero(dim(), dim()));
  for (int i = 0; i < dim(); ++i) {
    if (x[i] >= upper_[i] || x[i] <= lower_[i]) j[0](i, i) = 1.0;
  }
}

}  // namespace stela
