#pragma once

#include "stela/factor_graph.hpp"
#include "stela/models.hpp"
#include "stela/planner.hpp"
#include "stela/stela.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace stela {

/// One logged run of the robot under a known piecewise-constant plan.
/// The robot starts at rest; observations are stamped on the plan clock.
struct SysIdEpisode {
  std::vector<TrajectoryEdge> plan;
  std::vector<ObservationMsg> observations;
};

struct SysIdDataset {
  std::vector<SysIdEpisode> episodes;
  double observation_sigma = 0.01;  // m; heading uses half

  void validate() const;
};

/// Names of the fitted parameters, in Param(i) order.
inline const std::array<std::string, 3> kFittedParameters{"k_a", "k_w", "c_d"};

struct SysIdConfig {
  double integration_sigma = 1e-4;
  double dynamics_sigma = 1e-3;
  double initial_velocity_sigma = 1e-3;
  SolverConfig solver{.max_iterations = 100};
};

struct SysIdResult {
  MushrParams params;
  std::map<std::string, double> fitted;  // k_a, k_w, c_d
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  double observation_rms = 0.0;  // position residual after the fit, m
  std::vector<std::vector<State>> states;  // per-episode node estimates
};

/// Dynamics residual of the car with (k_a, k_w, c_d) as graph variables and
/// the executed control held fixed.
/// Keys: Qdot(next), Qdot(cur), Param(0), Param(1), Param(2).
class ParameterDynamicsFactor final : public Factor {
 public:
  ParameterDynamicsFactor(VariableKey qdot_next, VariableKey qdot, Vec u, double dt, MushrParams base, double sigma);

  Eigen::VectorXd residual(ValueRefs values) const override;
  bool has_analytic_jacobians() const override { return true; }
  void analytic_jacobians(ValueRefs values, std::vector<Eigen::MatrixXd>& jacobians) const override;

 private:
  MushrParams with(ValueRefs values) const;

  Vec u_;
  double dt_;
  MushrParams base_;
};

/// Joint fit of (k_a, k_w, c_d) over all episodes, starting from the forward
/// propagation of `initial`. Throws UsageError naming the parameter when the
/// data cannot determine it.
SysIdResult fit_parameters(const SysIdDataset& data, const MushrParams& initial, const SysIdConfig& config = {});

/// Ordinary least-squares degree-5 polynomial through (command, angle) pairs.
/// Needs at least 7 distinct commands and a full-rank design.
std::array<double, 6> fit_steering_polynomial(const std::vector<std::pair<double, double>>& pairs);

/// (steering command, effective steering angle) per episode from fitted
/// states: atan(omega L / vx) averaged over the second half of each episode.
std::vector<std::pair<double, double>> effective_steering_pairs(const SysIdDataset& data, const SysIdResult& fit,
                                                                double min_speed = 0.1);

/// RMS position error of open-loop predictions from rest against the observations.
double prediction_rms(const MushrParams& params, const SysIdDataset& data);

struct SyntheticConfig {
  int episodes = 10;
  double duration = 3.0;
  double edge_dt = 0.05;
  double observation_rate_hz = 20.0;
  double max_stamp_offset = 0.02;
};

/// Episodes with random two-phase throttle and constant steering, simulated
/// with `truth`; observation noise `sigma_z` (heading half).
SysIdDataset make_synthetic_dataset(const MushrParams& truth, double sigma_z, std::uint64_t seed,
                                    const SyntheticConfig& config = {});

/// Rows: episode,t,u1,u2,z_x,z_y,z_theta. One row per observation; u is the
/// control active at t.
void write_dataset_csv(std::ostream& out, const SysIdDataset& data);
/// Rebuilds each plan as edges of `edge_dt` using the control of the latest
/// row at or before the edge start.
SysIdDataset read_dataset_csv(std::istream& in, double edge_dt, double observation_sigma);

}  // namespace stela
