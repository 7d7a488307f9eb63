#pragma once

#include "stela/models.hpp"
#include "stela/planner.hpp"
#include "stela/stela.hpp"
#include "stela/world.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace stela {

/// Noise grid: index 0 is always exactly zero noise.
struct NoiseLevels {
  std::vector<double> sigma_x{0.0, 0.002, 0.005, 0.008};  // twist units per sqrt(s)
  std::vector<double> sigma_z{0.0, 0.01, 0.03, 0.05};     // m; heading uses half
  int x_index = 0;
  int z_index = 0;

  double sx() const;
  double sz() const;
  void validate() const;
};

struct SimConfig {
  double tick_rate_hz = 30.0;
  double observation_rate_hz = 20.0;
  double max_timestamp_jitter = 0.005;
  double max_substep = 0.01;
  double collision_spacing = 0.01;
  double timeout_factor = 3.0;
  double goal_radius = 0.5;
  double goal_angle_weight = 0.3;
  bool audit = false;  // run the posterior-partition audit after every tick
};

/// Everything a run needs apart from noise and seed.
struct SimTask {
  std::shared_ptr<const Scene> scene;
  ModelPtr model;       // model used by the controller
  ModelPtr true_model;  // robot dynamics; defaults to `model`
  DesiredTrajectory trajectory;
  Eigen::Vector3d goal = Eigen::Vector3d::Zero();
  DistanceOraclePtr sdf;  // shared SDF; built on demand when null
  std::optional<State> initial;  // true start state; defaults to the first plan node
};

enum class Outcome { kSuccess, kCollision, kTimeout, kSolverDegradedSuccess, kSolverFailure };

std::string to_string(Outcome o);
inline bool succeeded(Outcome o) { return o == Outcome::kSuccess || o == Outcome::kSolverDegradedSuccess; }

struct RunSample {
  double time = 0.0;
  State truth;
  GroupElement estimate;
  Vec u;
  int edge = 0;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::string controller;
  Outcome outcome = Outcome::kTimeout;
  std::vector<RunSample> samples;  // one per controller tick
  std::vector<ObservationMsg> observations;
  std::vector<double> solve_ms;  // controller wall time per tick, solve included
  double end_time = 0.0;
  double plan_duration = 0.0;
  double collision_time = -1.0;
  int dropped_observations = 0;
  int degraded_ticks = 0;
  int audit_violations = 0;
  int ticks = 0;
  bool has_estimates = false;
};

/// Independent RNG streams derived from one master seed.
enum class Stream : std::uint64_t { kDynamics = 1, kObservation = 2, kJitter = 3, kPlanner = 4 };
std::mt19937_64 make_stream(std::uint64_t master, Stream s);

RunRecord simulate_closed_loop(const SimTask& task, const NoiseLevels& noise, const WindowConfig& window,
                               std::uint64_t seed, const SimConfig& config = {},
                               std::vector<TickTrace>* trace = nullptr);
RunRecord simulate_open_loop(const SimTask& task, const NoiseLevels& noise, std::uint64_t seed,
                             const SimConfig& config = {});

struct Metrics {
  bool success = false;
  double normalized_cost = 0.0;
  double trajectory_error = 0.0;
  double estimation_error = 0.0;
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double time_to_collision = 1.0;  // fraction of the plan duration reached before a collision
};

/// Weighted pose distance (position 1, heading 0.3).
double pose_distance(const GroupElement& a, const GroupElement& b);

Metrics compute_metrics(const RunRecord& record, const DesiredTrajectory& plan);

/// Per-tick record as CSV; contains no wall-clock data.
void write_run_csv(std::ostream& out, const RunRecord& record);

}  // namespace stela
