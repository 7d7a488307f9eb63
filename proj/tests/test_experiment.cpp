#include "stela/commands.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace stela;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_config(const std::string& dir) {
  ExperimentConfig c = default_experiment("simple_obstacle", "ltv_sde");
  c.trajectories = 1;
  c.repetitions = 2;
  c.sigma_x_indices = {0, 3};
  c.sigma_z_indices = {0, 3};
  c.paired_noise = true;
  c.planner.max_iterations = 60000;
  c.output_dir = dir;
  c.plan_cache = dir + "/cache";
  c.seed = 9;
  return c;
}

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("stela_test_" + name);
  std::filesystem::remove_all(p);
  return p.string();
}

}  // namespace

TEST(Experiment, ConfigRoundTripsThroughJson) {
  ExperimentConfig c = default_experiment("bug_trap", "mushr");
  c.window.n_fwd = 7;
  c.window.noise.obstacle = 0.02;
  c.window.obstacle_backend = ObstacleBackend::kPerObstacle;
  c.sim.timeout_factor = 2.5;
  c.planner.goal_bias = 0.1;
  c.variants = {"full", "naive_init"};
  c.noise.sigma_x = {0.0, 0.123456789012345};
  c.sigma_x_indices = {0, 1};
  c.seed = 0xfedcba9876543210ull;
  const nlohmann::json j = config_to_json(c);
  const ExperimentConfig back = config_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(config_to_json(back), j);
  EXPECT_EQ(back.window.n_fwd, 7);
  EXPECT_EQ(back.window.obstacle_backend, ObstacleBackend::kPerObstacle);
  EXPECT_EQ(back.noise.sigma_x[1], 0.123456789012345);
  EXPECT_EQ(back.seed, 0xfedcba9876543210ull);
}

TEST(Experiment, ConfigRejectsUnknownKeysAndBadValues) {
  nlohmann::json j = config_to_json(default_experiment("forest", "ltv_sde"));
  j["window"]["n_fwdd"] = 3;
  EXPECT_THROW(config_from_json(j), UsageError);
  nlohmann::json k = config_to_json(default_experiment("forest", "ltv_sde"));
  k["sigma_x_indices"] = {0, 9};
  EXPECT_THROW(config_from_json(k), UsageError);
  nlohmann::json m = config_to_json(default_experiment("forest", "ltv_sde"));
  m["variants"] = {"bogus"};
  EXPECT_THROW(config_from_json(m), UsageError);
  EXPECT_NO_THROW(config_from_json(nlohmann::json::object()));
}

TEST(Experiment, SceneDefaultsFollowTrajectoryGrid) {
  EXPECT_EQ(default_trajectory_grid(SceneKind::kSimpleObstacle), std::make_pair(1, 5));
  EXPECT_EQ(default_trajectory_grid(SceneKind::kForest), std::make_pair(10, 10));
  EXPECT_EQ(default_trajectory_grid(SceneKind::kBugTrap), std::make_pair(2, 5));
  const ExperimentConfig c = default_experiment("forest", "ltv_sde");
  EXPECT_EQ(c.trajectory_count() * c.repetition_count(), 100);
}

TEST(Experiment, SeedsArePairedAcrossCellsAndControllers) {
  ExperimentConfig c = default_experiment("simple_obstacle", "ltv_sde");
  c.variants = {"full", "no_time_var"};
  const auto specs = enumerate_runs(c);
  EXPECT_EQ(specs.size(), 16u * 5u * 3u);
  std::map<std::pair<int, int>, std::uint64_t> seeds;
  for (const auto& s : specs) {
    auto [it, fresh] = seeds.emplace(std::make_pair(s.trajectory, s.repetition), s.seed);
    EXPECT_EQ(it->second, s.seed);
  }
  std::set<std::uint64_t> distinct;
  for (const auto& [k, v] : seeds) distinct.insert(v);
  EXPECT_EQ(distinct.size(), seeds.size());
}

TEST(Experiment, VariantsChangeOnlyTheirSetting) {
  const WindowConfig w;
  EXPECT_EQ(apply_variant(w, "fwd1_hist0").n_fwd, 1);
  EXPECT_EQ(apply_variant(w, "fwd1_hist0").n_hist, 0);
  EXPECT_EQ(apply_variant(w, "fwd10_hist0").n_hist, 0);
  EXPECT_EQ(apply_variant(w, "fwd1_hist10").n_hist, 10);
  EXPECT_FALSE(apply_variant(w, "no_time_var").time_as_variable);
  EXPECT_EQ(apply_variant(w, "obstacle_none").obstacle_backend, ObstacleBackend::kNone);
  EXPECT_EQ(apply_variant(w, "obstacle_per_obstacle").obstacle_backend, ObstacleBackend::kPerObstacle);
  EXPECT_EQ(apply_variant(w, "naive_init").n_fwd, w.n_fwd);
  EXPECT_THROW(apply_variant(w, "other"), UsageError);
}

TEST(Experiment, ParallelRunsMatchSerialReference) {
  const ExperimentConfig c = small_config(temp_dir("parallel"));
  const ExperimentContext ctx = prepare_experiment(c, 2);
  const auto specs = enumerate_runs(c);
  const auto par = execute_runs(c, ctx, specs, 3);
  const auto ser = execute_runs_serial(c, ctx, specs);
  std::ostringstream a, b;
  write_runs_csv(a, c, par);
  write_runs_csv(b, c, ser);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Experiment, SweepIsByteIdenticalAcrossReruns) {
  const std::string dir = temp_dir("sweep");
  const ExperimentConfig c = small_config(dir);
  CommandOptions o;
  o.jobs = 2;
  const BatchOutput first = cmd_sweep(c, o);
  const std::string runs = slurp(dir + "/runs.csv");
  const std::string sweep = slurp(dir + "/sweep.csv");
  EXPECT_EQ(first.errors, 0);
  // Second pass loads the cached plan.
  cmd_sweep(c, o);
  EXPECT_EQ(slurp(dir + "/runs.csv"), runs);
  EXPECT_EQ(slurp(dir + "/sweep.csv"), sweep);
  EXPECT_TRUE(std::filesystem::exists(dir + "/sweep_timing.csv"));
  for (const auto& cell : first.cells) {
    if (cell.sx == 0) EXPECT_EQ(cell.success_rate, 1.0) << cell.controller;
  }
}

TEST(Experiment, RunCommandIsReproducible) {
  const std::string dir = temp_dir("run");
  ExperimentConfig c = small_config(dir);
  CommandOptions o;
  const auto files = cmd_plan(c, o);
  ASSERT_EQ(files.size(), 1u);
  RunOptions r;
  r.trajectory_file = files.front();
  r.sx = 3;
  r.sz = 3;
  cmd_run(c, o, r);
  const std::string first = slurp(dir + "/run.csv");
  const std::string trace = slurp(dir + "/trace.csv");
  cmd_run(c, o, r);
  EXPECT_EQ(slurp(dir + "/run.csv"), first);
  EXPECT_EQ(slurp(dir + "/trace.csv"), trace);
  r.trajectory_file = dir + "/missing.json";
  EXPECT_THROW(cmd_run(c, o, r), UsageError);
}
