#pragma once

#include "stela/lie.hpp"

#include <Eigen/Core>

#include <array>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>

namespace stela {

/// Robot state x = [q, qdot]; qdot lives in the tangent space of q.
struct State {
  GroupElement q;
  Vec qdot;

  Tangent twist() const { return {q.manifold(), qdot}; }
};

/// Approximate dynamics used by planner, factors and simulator:
/// qdd = f(u, qdot), expressed in the local (body) frame.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual std::string name() const = 0;
  virtual Manifold config_manifold() const = 0;
  virtual int config_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual Vec control_lower() const = 0;
  virtual Vec control_upper() const = 0;
  /// Box used by the planner to sample and bound velocities.
  virtual Vec velocity_lower() const = 0;
  virtual Vec velocity_upper() const = 0;
  /// Maximum edge duration of a desired trajectory for this system.
  virtual double edge_threshold() const = 0;

  virtual Vec local_acceleration(const Vec& u, const Vec& qdot) const = 0;
  virtual void acceleration_jacobians(const Vec& u, const Vec& qdot, Eigen::MatrixXd& d_u,
                                      Eigen::MatrixXd& d_qdot) const = 0;

  /// Flat key-value representation of the model parameters.
  virtual std::map<std::string, double> parameters() const = 0;

  GroupElement identity() const { return GroupElement::identity(config_manifold(), config_dim()); }
  bool velocity_in_bounds(const Vec& qdot) const;
};

using ModelPtr = std::shared_ptr<const DynamicsModel>;

/// Planar double integrator: q, qdot in R^2, u is acceleration.
class LtvSdeModel final : public DynamicsModel {
 public:
  std::string name() const override { return "ltv_sde"; }
  Manifold config_manifold() const override { return Manifold::kRn; }
  int config_dim() const override { return 2; }
  int control_dim() const override { return 2; }
  Vec control_lower() const override { return Vec::Constant(2, -0.2); }
  Vec control_upper() const override { return Vec::Constant(2, 0.2); }
  Vec velocity_lower() const override { return Vec::Constant(2, -max_speed_); }
  Vec velocity_upper() const override { return Vec::Constant(2, max_speed_); }
  double edge_threshold() const override { return 0.5; }
  Vec local_acceleration(const Vec& u, const Vec& qdot) const override;
  void acceleration_jacobians(const Vec& u, const Vec& qdot, Eigen::MatrixXd& d_u,
                              Eigen::MatrixXd& d_qdot) const override;
  std::map<std::string, double> parameters() const override { return {{"max_speed", max_speed_}}; }

  explicit LtvSdeModel(double max_speed = 0.6) : max_speed_(max_speed) {}

 private:
  double max_speed_;
};

struct MushrParams {
  double accel_gain = 2.0;       // k_a, m/s^2 per unit throttle
  double angular_gain = 4.0;     // k_w, 1/s
  double wheelbase = 0.3;        // L, m
  double drag = 0.3;             // c_d, 1/s
  double lateral_tau = 0.2;      // s
  double max_steering = 0.45;    // rad
  std::array<double, 6> steering{0.0, 0.38, 0.0, 0.0, 0.0, 0.0};
  double max_speed = 1.2;        // m/s, planner velocity box
};

/// Second-order car on SE(2) with body twist (vx, vy, omega) and controls
/// (throttle, steering command).
class MushrModel final : public DynamicsModel {
 public:
  explicit MushrModel(MushrParams p = {}) : p_(p) {}

  const MushrParams& params() const { return p_; }

  std::string name() const override { return "mushr"; }
  Manifold config_manifold() const override { return Manifold::kSE2; }
  int config_dim() const override { return 3; }
  int control_dim() const override { return 2; }
  Vec control_lower() const override { return Vec::Constant(2, -1.0); }
  Vec control_upper() const override { return Vec::Constant(2, 1.0); }
  Vec velocity_lower() const override;
  Vec velocity_upper() const override;
  double edge_threshold() const override { return 0.1; }
  Vec local_acceleration(const Vec& u, const Vec& qdot) const override;
  void acceleration_jacobians(const Vec& u, const Vec& qdot, Eigen::MatrixXd& d_u,
                              Eigen::MatrixXd& d_qdot) const override;
  std::map<std::string, double> parameters() const override;

  /// Degree-5 polynomial in the command, clamped to +-max_steering.
  double effective_steering(double u2) const;
  double effective_steering_derivative(double u2) const;

 private:
  MushrParams p_;
};

/// qdot' = qdot + f(u, qdot) dt;  q' = q * Exp(qdot dt)  (position uses the pre-step velocity).
State step(const DynamicsModel& model, const State& x, const Vec& u, double dt);

/// Applies `u` for `duration` as ceil(duration / max_step) equal steps.
State propagate(const DynamicsModel& model, const State& x, const Vec& u, double duration, double max_step);
int substep_count(double duration, double max_step);

ModelPtr make_model(const std::string& id);
ModelPtr make_model(const std::map<std::string, std::string>& params);

/// Flat "key = value" parameter documents ('#' comments allowed).
std::map<std::string, std::string> read_parameter_file(std::istream& in);
void write_parameter_file(std::ostream& out, const DynamicsModel& model);
ModelPtr load_model_file(const std::string& path);

}  // namespace stela
