#pragma once

#include "stela/factor_graph.hpp"
#include "stela/factors.hpp"
#include "stela/planner.hpp"
#include "stela/world.hpp"

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stela {

enum class ObstacleBackend { kSdf, kPerObstacle, kNone };

std::string to_string(ObstacleBackend b);
ObstacleBackend obstacle_backend_from_string(const std::string& s);

struct WindowConfig {
  int n_fwd = 10;
  int n_hist = 10;
  double tick_rate_hz = 30.0;
  NoiseSpec noise;
  // Observation sigma used when the scenario's observation noise is smaller.
  double min_observation_sigma = 0.01;
  double obstacle_eps = 0.3;
  ObstacleBackend obstacle_backend = ObstacleBackend::kSdf;
  bool time_as_variable = true;
  // Duration limits relative to the planned duration of each edge.
  double dt_lower_factor = 0.25;
  double dt_upper_factor = 4.0;
  // Per-obstacle backend: obstacles within eps + this radius of a node get a factor.
  double per_obstacle_radius = 1.0;
  bool compute_covariances = true;
  SolverConfig solver{.max_iterations = 20, .dense_limit = 0};

  void validate() const;
};

struct ObservationMsg {
  GroupElement z;
  double stamp = 0.0;
};

struct ControlCommand {
  Vec u;
  double dt_estimate = 0.0;
  int edge = 0;              // edge the command belongs to (curr after the tick)
  double edge_start = 0.0;   // time the current edge started
  bool degraded = false;     // planned-control passthrough after a solver failure
  bool stopped = false;      // plan exhausted or goal reached by the estimate
};

enum class PosteriorSide { kTrajectoryEstimation, kLocalAdaptation };

struct TickTrace {
  double time = 0.0;
  int curr = 0;
  Vec u;
  double dt_estimate = 0.0;
  double cost = 0.0;
  double solve_ms = 0.0;
  double tick_ms = 0.0;  // whole tick: covariances, ingestion, solve, window update
  int iterations = 0;
  int factors = 0;
  int variables = 0;
  int observations = 0;
  double covariance_trace = 0.0;  // mean trace of the position covariances in the window
  bool degraded = false;
  bool advanced = false;
};

struct AuditReport {
  int violations = 0;
  int te_factors = 0;
  int la_factors = 0;
  std::vector<std::string> messages;
};

/// Sliding-window factor graph that estimates the executed past and adapts the
/// upcoming controls and durations of a desired trajectory.
class StelaController {
 public:
  StelaController(DesiredTrajectory trajectory, ModelPtr model, std::shared_ptr<const Scene> scene,
                  GoalRegion goal, WindowConfig config, DistanceOraclePtr sdf = nullptr, double start_time = 0.0);

  /// Queues an observation factor on the current node. Observations stamped
  /// before the last window advance are dropped and counted.
  void ingest_observation(const ObservationMsg& msg);

  /// One control cycle: lookahead, ingest, solve, read (u, dt), maybe advance.
  ControlCommand tick(double now, std::span<const ObservationMsg> observations = {});

  /// Moves the window forward by one node at time `now`.
  void advance(double now);

  int curr() const { return curr_; }
  int window_begin() const { return j_; }
  int window_end() const { return k_; }
  int plan_length() const { return traj_.num_edges(); }
  double edge_start() const { return prev_; }
  const FactorGraph& graph() const { return graph_; }
  const DesiredTrajectory& trajectory() const { return traj_; }
  const WindowConfig& config() const { return cfg_; }

  /// Estimated robot configuration at time `now` (current node advanced along its twist).
  GroupElement pose_estimate(double now) const;
  State node_estimate(int i) const;
  std::optional<double> dt_estimate(int edge) const;

  int dropped_observations() const { return dropped_; }
  int degraded_ticks() const { return degraded_ticks_; }
  bool goal_reached() const { return goal_reached_; }
  bool finished() const { return curr_ >= plan_length(); }

  /// Checks that every active factor belongs to the trajectory-estimation side
  /// (history) or the local-adaptation side (horizon) as expected.
  AuditReport audit() const;
  PosteriorSide side_of(FactorId id) const;

  const std::vector<TickTrace>& trace() const { return trace_; }
  void write_trace_csv(std::ostream& out) const;

  /// Test hook: makes the next solves report failure.
  void inject_solver_failure(bool on) { inject_failure_ = on; }

 private:
  struct Tag {
    PosteriorSide side;
    FactorKind kind;
    int index;  // node index for node factors, edge index for edge factors
    bool baked = false;
  };

  FactorId add(FactorPtr f, PosteriorSide side, int index, bool baked = false);
  void remove(FactorId id);
  void add_node(int i, const State& init);
  void add_edge(int i);
  void retire_current_edge(double now);
  void remove_node(int i);
  void record_control(double now, const Vec& u);
  Eigen::VectorXd observation_sigmas() const;

  DesiredTrajectory traj_;
  ModelPtr model_;
  std::shared_ptr<const Scene> scene_;
  GoalRegion goal_;
  WindowConfig cfg_;
  DistanceOraclePtr sdf_;

  FactorGraph graph_;
  std::map<FactorId, Tag> tags_;
  std::map<int, std::vector<FactorId>> node_la_;    // priors and obstacle factors
  std::map<int, std::vector<FactorId>> node_obs_;   // observation factors
  std::map<int, std::vector<FactorId>> edge_la_;    // chain, duration prior, limits
  std::map<int, std::vector<FactorId>> edge_te_;    // baked chain factors

  int curr_ = 0;
  int j_ = 0;
  int k_ = 0;
  double prev_ = 0.0;
  int dropped_ = 0;
  int degraded_ticks_ = 0;
  bool goal_reached_ = false;
  bool inject_failure_ = false;

  // Control actually emitted during the current edge.
  Vec u_integral_;
  Vec last_u_;
  double last_u_time_ = 0.0;

  std::vector<TickTrace> trace_;
};

}  // namespace stela
