#include "stela/commands.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <iostream>
#include <thread>

using namespace stela;

namespace {

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? default_experiment("forest", "ltv_sde") : load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory following with sliding-window factor graphs"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool verbose = false;

  auto common = [&](CLI::App* sub, bool with_jobs) {
    sub->add_option("--config", config_path, "Experiment config (JSON)");
    sub->add_option("--seed", seed, "Master seed override");
    sub->add_option("--out", out_dir, "Output directory override");
    if (with_jobs) sub->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
    sub->add_flag("-v,--verbose", verbose, "Debug logging");
  };

  auto* plan_cmd = app.add_subcommand("plan", "Plan the trajectories of an experiment");
  common(plan_cmd, true);

  RunOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "Execute one trajectory");
  common(run_cmd, false);
  run_cmd->add_option("--trajectory", run_opts.trajectory_file, "Trajectory JSON")->required();
  run_cmd->add_option("--controller", run_opts.controller, "stela | open_loop");
  run_cmd->add_option("--variant", run_opts.variant, "Window variant");
  run_cmd->add_option("--sx", run_opts.sx, "Dynamics noise index");
  run_cmd->add_option("--sz", run_opts.sz, "Observation noise index");
  run_cmd->add_option("--query", run_opts.query, "Scene query providing the goal");

  auto* sweep_cmd = app.add_subcommand("sweep", "Success-rate grid over noise levels");
  common(sweep_cmd, true);
  auto* ablate_cmd = app.add_subcommand("ablate", "Window ablations at the top noise cell");
  common(ablate_cmd, true);

  SysIdOptions sysid_opts;
  auto* sysid_cmd = app.add_subcommand("sysid", "Fit car parameters from a logged dataset");
  sysid_cmd->add_option("--dataset", sysid_opts.dataset, "CSV: episode,t,u1,u2,z_x,z_y,z_theta")->required();
  sysid_cmd->add_option("--initial", sysid_opts.initial_parameter_file, "Initial parameter file");
  sysid_cmd->add_option("--out", sysid_opts.out_file, "Fitted parameter file");
  sysid_cmd->add_option("--edge-dt", sysid_opts.edge_dt, "Plan discretization (s)");
  sysid_cmd->add_option("--sigma", sysid_opts.observation_sigma, "Observation sigma (m)");
  sysid_cmd->add_flag("-v,--verbose", verbose, "Debug logging");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);

  CommandOptions opts;
  opts.out_dir = out_dir;
  opts.jobs = jobs;
  auto seed_given = [&](CLI::App* sub) { return sub->count("--seed") > 0; };

  try {
    if (*sysid_cmd) {
      const SysIdResult r = cmd_sysid(sysid_opts);
      std::printf("k_a=%.9g k_w=%.9g c_d=%.9g observation_rms=%.3g m -> %s\n", r.params.accel_gain,
                  r.params.angular_gain, r.params.drag, r.observation_rms, sysid_opts.out_file.c_str());
      return 0;
    }
    for (CLI::App* sub : {plan_cmd, run_cmd, sweep_cmd, ablate_cmd}) {
      if (*sub && seed_given(sub)) opts.seed = seed;
    }
    const ExperimentConfig cfg = config_or_default(config_path);
    if (*plan_cmd) {
      for (const auto& f : cmd_plan(cfg, opts)) std::printf("%s\n", f.c_str());
      return 0;
    }
    if (*run_cmd) {
      std::printf("%s\n", cmd_run(cfg, opts, run_opts).dump(2).c_str());
      return 0;
    }
    const bool ablate = static_cast<bool>(*ablate_cmd);
    const BatchOutput b = ablate ? cmd_ablate(cfg, opts) : cmd_sweep(cfg, opts);
    for (const auto& c : b.cells) {
      std::printf("%-10s %-22s sx%d sz%d success %d/%d (%.2f)\n", c.controller.c_str(), c.variant.c_str(), c.sx, c.sz,
                  c.successes, c.runs, c.success_rate);
    }
    return b.errors == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
