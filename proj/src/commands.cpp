#include "stela/commands.hpp"

#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <set>

namespace stela {

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::filesystem::create_directories(p.parent_path().empty() ? "." : p.parent_path());
  std::ofstream out(p);
  if (!out) throw UsageError("cannot write " + p.string());
  return out;
}

void write_config(const ExperimentConfig& c) {
  auto out = open_out(std::filesystem::path(c.output_dir) / "config.json");
  out << config_to_json(c).dump(2) << "\n";
}

BatchOutput run_batch(const ExperimentConfig& c, const CommandOptions& o, const std::string& table, bool variants) {
  const ExperimentContext ctx = prepare_experiment(c, o.jobs);
  const std::vector<RunSpec> specs = enumerate_runs(c);
  spdlog::info("{}: {} runs on {} trajectories, {} jobs", table, specs.size(), ctx.plans.size(), o.jobs);
  BatchOutput b;
  b.results = execute_runs(c, ctx, specs, o.jobs);
  b.cells = summarize(c, b.results);
  for (const auto& r : b.results) {
    if (!r.error.empty()) {
      ++b.errors;
      spdlog::error("run t{} r{} {}/{} failed: {}", r.spec.trajectory, r.spec.repetition, r.spec.controller,
                    r.spec.variant, r.error);
    }
  }
  const std::filesystem::path dir(c.output_dir);
  write_config(c);
  {
    auto out = open_out(dir / "runs.csv");
    write_runs_csv(out, c, b.results);
  }
  {
    auto out = open_out(dir / (table + ".csv"));
    write_summary_csv(out, b.cells, variants);
  }
  {
    auto out = open_out(dir / (table + "_timing.csv"));
    write_timing_csv(out, b.cells, variants);
  }
  return b;
}

}  // namespace

ExperimentConfig with_overrides(ExperimentConfig c, const CommandOptions& o) {
  if (!o.out_dir.empty()) c.output_dir = o.out_dir;
  if (o.seed) c.seed = *o.seed;
  if (o.jobs < 1) throw UsageError("--jobs must be >= 1");
  c.validate();
  return c;
}

std::vector<std::string> cmd_plan(const ExperimentConfig& cfg, const CommandOptions& o) {
  const ExperimentConfig c = with_overrides(cfg, o);
  const ExperimentContext ctx = prepare_experiment(c, o.jobs);
  std::vector<std::string> files;
  for (std::size_t t = 0; t < ctx.plans.size(); ++t) {
    const auto p = std::filesystem::path(c.output_dir) / "plans" / ("traj_" + std::to_string(t) + ".json");
    auto out = open_out(p);
    nlohmann::json j = trajectory_to_json(ctx.plans[t]);
    j["query"] = ctx.queries[t].label;
    j["planner_seed"] = ctx.planner_seeds[t];
    out << j.dump(2) << "\n";
    files.push_back(p.string());
  }
  write_config(c);
  return files;
}

nlohmann::json cmd_run(const ExperimentConfig& cfg, const CommandOptions& o, const RunOptions& r) {
  const ExperimentConfig c = with_overrides(cfg, o);
  if (r.controller != "stela" && r.controller != "open_loop") throw UsageError("unknown controller " + r.controller);
  std::ifstream in(r.trajectory_file);
  if (!in) throw UsageError("cannot open trajectory " + r.trajectory_file);
  nlohmann::json tj;
  try {
    tj = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("trajectory " + r.trajectory_file + ": " + e.what());
  }
  auto scene = std::make_shared<Scene>(make_scene(c.scene, c.scene_seed));
  if (r.query < 0 || r.query >= static_cast<int>(scene->queries.size())) throw UsageError("query index out of range");
  SimTask task;
  task.scene = scene;
  task.model = c.parameter_file.empty() ? make_model(c.model) : load_model_file(c.parameter_file);
  task.true_model = c.true_parameter_file.empty() ? task.model : load_model_file(c.true_parameter_file);
  task.trajectory = trajectory_from_json(tj);
  if (task.trajectory.model_id != task.model->name()) {
    throw UsageError("trajectory was planned for " + task.trajectory.model_id + ", config uses " + task.model->name());
  }
  task.goal = scene->queries[static_cast<std::size_t>(r.query)].goal;
  NoiseLevels noise = c.noise;
  noise.x_index = r.sx;
  noise.z_index = r.sz;
  noise.validate();
  const std::uint64_t seed = c.seed;
  std::vector<TickTrace> trace;
  RunRecord rec;
  if (r.controller == "open_loop") {
    rec = simulate_open_loop(task, noise, seed, c.sim);
  } else {
    task.sdf = std::make_shared<SdfGrid>(build_sdf(*scene));
    rec = simulate_closed_loop(task, noise, apply_variant(c.window, r.variant), seed, c.sim, &trace);
  }
  const Metrics m = compute_metrics(rec, task.trajectory);
  const std::filesystem::path dir(c.output_dir);
  {
    auto out = open_out(dir / "run.csv");
    write_run_csv(out, rec);
  }
  if (!trace.empty()) {
    auto out = open_out(dir / "trace.csv");
    out << "time,curr,u0,u1,dt_estimate,cost,iterations,factors,variables,observations,degraded,advanced\n";
    char buf[256];
    for (const auto& t : trace) {
      std::snprintf(buf, sizeof(buf), "%.6f,%d,%.9g,%.9g,%.9g,%.9g,%d,%d,%d,%d,%d,%d\n", t.time, t.curr,
                    t.u.size() > 0 ? t.u[0] : 0.0, t.u.size() > 1 ? t.u[1] : 0.0, t.dt_estimate, t.cost,
                    t.iterations, t.factors, t.variables, t.observations, t.degraded ? 1 : 0, t.advanced ? 1 : 0);
      out << buf;
    }
    // Solve times are wall-clock; they live apart from the reproducible files.
    auto timing = open_out(dir / "trace_timing.csv");
    timing << "time,solve_ms,tick_ms\n";
    for (const auto& t : trace) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.4f,%.4f\n", t.time, t.solve_ms, t.tick_ms);
      timing << buf;
    }
  }
  nlohmann::json summary{{"controller", r.controller},
                         {"variant", r.variant},
                         {"seed", seed},
                         {"sigma_x_index", r.sx},
                         {"sigma_z_index", r.sz},
                         {"outcome", to_string(rec.outcome)},
                         {"success", m.success},
                         {"end_time", rec.end_time},
                         {"plan_duration", rec.plan_duration},
                         {"normalized_cost", m.normalized_cost},
                         {"trajectory_error", m.trajectory_error},
                         {"estimation_error", m.estimation_error},
                         {"time_to_collision", m.time_to_collision},
                         {"ticks", rec.ticks},
                         {"degraded_ticks", rec.degraded_ticks},
                         {"dropped_observations", rec.dropped_observations}};
  auto out = open_out(dir / "run.json");
  out << summary.dump(2) << "\n";
  return summary;
}

BatchOutput cmd_sweep(const ExperimentConfig& cfg, const CommandOptions& o) {
  // The variant column only appears when it distinguishes rows.
  return run_batch(with_overrides(cfg, o), o, "sweep", cfg.variants.size() > 1);
}

BatchOutput cmd_ablate(const ExperimentConfig& cfg, const CommandOptions& o) {
  ExperimentConfig c = with_overrides(cfg, o);
  if (c.variants == std::vector<std::string>{"full"}) c.variants = kAblationVariants;
  c.controllers = {"stela"};
  c.sigma_x_indices = {c.sigma_x_indices.back()};
  c.sigma_z_indices = {c.sigma_z_indices.back()};
  c.paired_noise = false;
  return run_batch(c, o, "ablation", true);
}

SysIdResult cmd_sysid(const SysIdOptions& s) {
  std::ifstream in(s.dataset);
  if (!in) throw UsageError("cannot open dataset " + s.dataset);
  const SysIdDataset data = read_dataset_csv(in, s.edge_dt, s.observation_sigma);
  MushrParams initial;
  if (!s.initial_parameter_file.empty()) {
    const ModelPtr m = load_model_file(s.initial_parameter_file);
    const auto* car = dynamic_cast<const MushrModel*>(m.get());
    if (!car) throw UsageError("system identification needs a mushr parameter file");
    initial = car->params();
  }
  SysIdResult r = fit_parameters(data, initial);
  const auto pairs = effective_steering_pairs(data, r);
  std::set<double> commands;
  for (const auto& p : pairs) commands.insert(p.first);
  if (commands.size() >= 7) {
    r.params.steering = fit_steering_polynomial(pairs);
  } else {
    spdlog::warn("only {} distinct steering commands; keeping the initial steering polynomial", commands.size());
  }
  auto out = open_out(s.out_file);
  write_parameter_file(out, MushrModel(r.params));
  return r;
}

}  // namespace stela
