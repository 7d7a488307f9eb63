#pragma once

#include "stela/models.hpp"
#include "stela/planner.hpp"
#include "stela/sim.hpp"
#include "stela/stela.hpp"
#include "stela/world.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace stela {

inline const std::vector<std::string> kAblationVariants{
    "full", "fwd10_hist0", "fwd1_hist10", "fwd1_hist0", "no_time_var", "obstacle_none", "obstacle_per_obstacle",
    "naive_init"};

/// One batch of closed- and open-loop runs on a scene.
struct ExperimentConfig {
  std::string scene = "forest";
  std::uint64_t scene_seed = 1;
  std::string model = "ltv_sde";
  std::string parameter_file;       // replaces `model` when set
  std::string true_parameter_file;  // robot dynamics; defaults to the controller's model
  NoiseLevels noise;
  std::vector<int> sigma_x_indices{0, 1, 2, 3};
  std::vector<int> sigma_z_indices{0, 1, 2, 3};
  // Cells are the product of the index lists, or their element-wise pairs when set.
  bool paired_noise = false;
  int trajectories = 0;  // 0: scene default
  int repetitions = 0;   // 0: scene default
  std::vector<std::string> controllers{"open_loop", "stela"};
  std::vector<std::string> variants{"full"};
  WindowConfig window;
  SimConfig sim;
  PlannerConfig planner;
  int plan_attempts = 5;
  std::string output_dir = "stela_out";
  std::string plan_cache;  // directory for reusable plans; empty disables
  std::uint64_t seed = 1;

  int trajectory_count() const;
  int repetition_count() const;
  void validate() const;
};

/// Default trajectories x repetitions per scene: simple 1x5, forest 10x10, bug trap 2x5.
std::pair<int, int> default_trajectory_grid(SceneKind kind);

/// Noise grid for a model; index 0 is exact zero.
NoiseLevels default_noise_levels(const std::string& model_id);

/// Config with model-dependent defaults filled in.
ExperimentConfig default_experiment(const std::string& scene, const std::string& model);

nlohmann::json config_to_json(const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// Everything shared by the runs of one experiment.
struct ExperimentContext {
  std::shared_ptr<const Scene> scene;
  ModelPtr model;
  ModelPtr true_model;
  DistanceOraclePtr sdf;
  std::vector<Query> queries;                 // per trajectory
  std::vector<DesiredTrajectory> plans;       // per trajectory
  std::vector<std::uint64_t> planner_seeds;   // seed that produced each plan
};

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts);

/// Builds the scene and models and plans (or loads cached) trajectories.
/// Planning uses up to `jobs` threads. Throws when a trajectory cannot be planned.
ExperimentContext prepare_experiment(const ExperimentConfig& c, int jobs = 1);

struct RunSpec {
  int trajectory = 0;
  int repetition = 0;
  int sx = 0;
  int sz = 0;
  std::string controller;  // open_loop | stela
  std::string variant = "full";
  std::uint64_t seed = 0;
};

struct RunResult {
  RunSpec spec;
  Outcome outcome = Outcome::kTimeout;
  Metrics metrics;
  int degraded_ticks = 0;
  int dropped_observations = 0;
  int audit_violations = 0;
  int ticks = 0;
  double wall_s = 0.0;
  std::string error;  // non-empty when the run threw
};

/// Cells x trajectories x repetitions x controllers x variants, in a fixed order.
/// Seeds depend only on (master, trajectory, repetition), so all cells are paired.
std::vector<RunSpec> enumerate_runs(const ExperimentConfig& c);

/// Window settings of an ablation variant.
WindowConfig apply_variant(WindowConfig w, const std::string& variant);

RunResult execute_run(const ExperimentConfig& c, const ExperimentContext& ctx, const RunSpec& spec);
/// Runs in parallel; results are stored by spec position.
std::vector<RunResult> execute_runs(const ExperimentConfig& c, const ExperimentContext& ctx,
                                    const std::vector<RunSpec>& specs, int jobs);
/// Single-threaded reference with the same contract.
std::vector<RunResult> execute_runs_serial(const ExperimentConfig& c, const ExperimentContext& ctx,
                                           const std::vector<RunSpec>& specs);

struct CellSummary {
  std::string scene;
  std::string model;
  std::string controller;
  std::string variant;
  int sx = 0;
  int sz = 0;
  double sigma_x = 0.0;
  double sigma_z = 0.0;
  int runs = 0;
  int successes = 0;
  int errors = 0;
  double success_rate = 0.0;
  double mean_cost = 0.0;        // successful runs only
  double mean_trajectory_error = 0.0;
  double mean_estimation_error = 0.0;
  double mean_time_to_collision = 0.0;
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
};

/// Groups by (controller, variant, sx, sz), sorted by that key.
std::vector<CellSummary> summarize(const ExperimentConfig& c, const std::vector<RunResult>& results);

/// Deterministic tables: no wall-clock columns.
void write_runs_csv(std::ostream& out, const ExperimentConfig& c, const std::vector<RunResult>& results);
void write_summary_csv(std::ostream& out, const std::vector<CellSummary>& cells, bool with_variant);
/// Solve-time sidecar for the summary rows.
void write_timing_csv(std::ostream& out, const std::vector<CellSummary>& cells, bool with_variant);

}  // namespace stela
