#pragma once

#include "stela/experiment.hpp"
#include "stela/sysid.hpp"

#include <string>
#include <vector>

namespace stela {

struct CommandOptions {
  std::string out_dir;         // overrides the config's output_dir when set
  std::optional<std::uint64_t> seed;  // overrides the config's master seed
  int jobs = 1;
};

/// Config with the command-line overrides applied.
ExperimentConfig with_overrides(ExperimentConfig c, const CommandOptions& o);

/// Writes plans/traj_<i>.json; returns the file paths.
std::vector<std::string> cmd_plan(const ExperimentConfig& c, const CommandOptions& o);

struct RunOptions {
  std::string trajectory_file;
  std::string controller = "stela";
  std::string variant = "full";
  int sx = 0;
  int sz = 0;
  int query = 0;  // scene query whose goal the run uses
};

/// Writes run.csv, run.json and, for STELA, trace.csv. Returns the record summary.
nlohmann::json cmd_run(const ExperimentConfig& c, const CommandOptions& o, const RunOptions& r);

struct BatchOutput {
  std::vector<RunResult> results;
  std::vector<CellSummary> cells;
  int errors = 0;
};

/// runs.csv, sweep.csv and sweep_timing.csv in the output directory.
BatchOutput cmd_sweep(const ExperimentConfig& c, const CommandOptions& o);

/// Ablation variants at the top noise cell: runs.csv, ablation.csv, ablation_timing.csv.
/// A config that only lists "full" is expanded to every variant.
BatchOutput cmd_ablate(const ExperimentConfig& c, const CommandOptions& o);

struct SysIdOptions {
  std::string dataset;
  std::string initial_parameter_file;  // default MuSHR parameters when empty
  std::string out_file = "mushr_fitted.txt";
  double edge_dt = 0.05;
  double observation_sigma = 0.01;
};

/// Fits (k_a, k_w, c_d), then the steering polynomial when the data has at least
/// 7 distinct steering commands, and writes a parameter file.
SysIdResult cmd_sysid(const SysIdOptions& s);

}  // namespace stela
