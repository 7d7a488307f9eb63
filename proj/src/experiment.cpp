#include "stela/experiment.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <tuple>

namespace stela {

namespace {

// Reads an object field by field and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw UsageError(where_ + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw UsageError(where_ + ": unknown key '" + k + "'");
    }
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(where_ + "." + key + ": " + e.what());
    }
  }
  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

nlohmann::json noise_spec_json(const NoiseSpec& n) {
  return {{"integration", n.integration}, {"dynamics", n.dynamics},
          {"observation", n.observation}, {"q_prior_position", n.q_prior_position},
          {"q_prior_rotation", n.q_prior_rotation}, {"qdot_prior", n.qdot_prior},
          {"dt_prior", n.dt_prior}, {"obstacle", n.obstacle},
          {"limits", n.limits}};
}

void read_noise_spec(const nlohmann::json& j, NoiseSpec& n) {
  Reader r(j, "window.sigmas");
  r.get("integration", n.integration);
  r.get("dynamics", n.dynamics);
  r.get("observation", n.observation);
  r.get("q_prior_position", n.q_prior_position);
  r.get("q_prior_rotation", n.q_prior_rotation);
  r.get("qdot_prior", n.qdot_prior);
  r.get("dt_prior", n.dt_prior);
  r.get("obstacle", n.obstacle);
  r.get("limits", n.limits);
}

nlohmann::json window_json(const WindowConfig& w) {
  return {{"n_fwd", w.n_fwd},
          {"n_hist", w.n_hist},
          {"tick_rate_hz", w.tick_rate_hz},
          {"sigmas", noise_spec_json(w.noise)},
          {"min_observation_sigma", w.min_observation_sigma},
          {"obstacle_eps", w.obstacle_eps},
          {"obstacle_backend", to_string(w.obstacle_backend)},
          {"time_as_variable", w.time_as_variable},
          {"dt_lower_factor", w.dt_lower_factor},
          {"dt_upper_factor", w.dt_upper_factor},
          {"per_obstacle_radius", w.per_obstacle_radius},
          {"compute_covariances", w.compute_covariances},
          {"solver_max_iterations", w.solver.max_iterations}};
}

void read_window(const nlohmann::json& j, WindowConfig& w) {
  Reader r(j, "window");
  r.get("n_fwd", w.n_fwd);
  r.get("n_hist", w.n_hist);
  r.get("tick_rate_hz", w.tick_rate_hz);
  if (const auto* s = r.child("sigmas")) read_noise_spec(*s, w.noise);
  r.get("min_observation_sigma", w.min_observation_sigma);
  r.get("obstacle_eps", w.obstacle_eps);
  std::string backend = to_string(w.obstacle_backend);
  r.get("obstacle_backend", backend);
  w.obstacle_backend = obstacle_backend_from_string(backend);
  r.get("time_as_variable", w.time_as_variable);
  r.get("dt_lower_factor", w.dt_lower_factor);
  r.get("dt_upper_factor", w.dt_upper_factor);
  r.get("per_obstacle_radius", w.per_obstacle_radius);
  r.get("compute_covariances", w.compute_covariances);
  r.get("solver_max_iterations", w.solver.max_iterations);
}

nlohmann::json sim_json(const SimConfig& s) {
  return {{"tick_rate_hz", s.tick_rate_hz},
          {"observation_rate_hz", s.observation_rate_hz},
          {"max_timestamp_jitter", s.max_timestamp_jitter},
          {"max_substep", s.max_substep},
          {"collision_spacing", s.collision_spacing},
          {"timeout_factor", s.timeout_factor},
          {"goal_radius", s.goal_radius},
          {"goal_angle_weight", s.goal_angle_weight},
          {"audit", s.audit}};
}

void read_sim(const nlohmann::json& j, SimConfig& s) {
  Reader r(j, "sim");
  r.get("tick_rate_hz", s.tick_rate_hz);
  r.get("observation_rate_hz", s.observation_rate_hz);
  r.get("max_timestamp_jitter", s.max_timestamp_jitter);
  r.get("max_substep", s.max_substep);
  r.get("collision_spacing", s.collision_spacing);
  r.get("timeout_factor", s.timeout_factor);
  r.get("goal_radius", s.goal_radius);
  r.get("goal_angle_weight", s.goal_angle_weight);
  r.get("audit", s.audit);
}

nlohmann::json planner_json(const PlannerConfig& p) {
  return {{"max_iterations", p.max_iterations}, {"min_duration", p.min_duration},
          {"max_duration", p.max_duration},     {"goal_bias", p.goal_bias},
          {"control_samples", p.control_samples}, {"check_spacing", p.check_spacing},
          {"clearance_margin", p.clearance_margin}, {"goal_radius", p.goal_radius}};
}

void read_planner(const nlohmann::json& j, PlannerConfig& p) {
  Reader r(j, "planner");
  r.get("max_iterations", p.max_iterations);
  r.get("min_duration", p.min_duration);
  r.get("max_duration", p.max_duration);
  r.get("goal_bias", p.goal_bias);
  r.get("control_samples", p.control_samples);
  r.get("check_spacing", p.check_spacing);
  r.get("clearance_margin", p.clearance_margin);
  r.get("goal_radius", p.goal_radius);
}

ModelPtr load_model(const std::string& id, const std::string& file) {
  return file.empty() ? make_model(id) : load_model_file(file);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::pair<int, int> default_trajectory_grid(SceneKind kind) {
  switch (kind) {
    case SceneKind::kForest: return {10, 10};
    case SceneKind::kBugTrap: return {2, 5};
    case SceneKind::kSimpleObstacle:
    case SceneKind::kEmpty: return {1, 5};
  }
  return {1, 5};
}

NoiseLevels default_noise_levels(const std::string& model_id) {
  NoiseLevels n;
  if (model_id == "mushr") {
    // Velocity noise is damped by the car's drag and steering lag, so it needs a larger scale.
    n.sigma_x = {0.0, 0.1, 0.15, 0.2};
  } else {
    n.sigma_x = {0.0, 0.005, 0.008, 0.011};
  }
  n.sigma_z = {0.0, 0.01, 0.03, 0.05};
  return n;
}

ExperimentConfig default_experiment(const std::string& scene, const std::string& model) {
  ExperimentConfig c;
  c.scene = scene;
  c.model = model;
  c.noise = default_noise_levels(model);
  return c;
}

int ExperimentConfig::trajectory_count() const {
  return trajectories > 0 ? trajectories : default_trajectory_grid(scene_kind_from_string(scene)).first;
}

int ExperimentConfig::repetition_count() const {
  return repetitions > 0 ? repetitions : default_trajectory_grid(scene_kind_from_string(scene)).second;
}

void ExperimentConfig::validate() const {
  scene_kind_from_string(scene);
  if (parameter_file.empty()) make_model(model);
  noise.validate();
  if (sigma_x_indices.empty() || sigma_z_indices.empty()) throw UsageError("empty noise index list");
  if (paired_noise && sigma_x_indices.size() != sigma_z_indices.size()) {
    throw UsageError("paired noise needs index lists of equal length");
  }
  for (int i : sigma_x_indices) {
    if (i < 0 || i >= static_cast<int>(noise.sigma_x.size())) throw UsageError("sigma_x index out of range");
  }
  for (int i : sigma_z_indices) {
    if (i < 0 || i >= static_cast<int>(noise.sigma_z.size())) throw UsageError("sigma_z index out of range");
  }
  if (trajectories < 0 || repetitions < 0) throw UsageError("negative trajectory or repetition count");
  if (controllers.empty()) throw UsageError("no controllers requested");
  for (const auto& ctl : controllers) {
    if (ctl != "open_loop" && ctl != "stela") throw UsageError("unknown controller '" + ctl + "'");
  }
  for (const auto& v : variants) {
    if (std::find(kAblationVariants.begin(), kAblationVariants.end(), v) == kAblationVariants.end()) {
      throw UsageError("unknown variant '" + v + "'");
    }
  }
  if (plan_attempts < 1) throw UsageError("plan_attempts must be >= 1");
  window.validate();
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  return {{"scene", c.scene},
          {"scene_seed", c.scene_seed},
          {"model", c.model},
          {"parameter_file", c.parameter_file},
          {"true_parameter_file", c.true_parameter_file},
          {"noise", {{"sigma_x", c.noise.sigma_x}, {"sigma_z", c.noise.sigma_z}}},
          {"sigma_x_indices", c.sigma_x_indices},
          {"sigma_z_indices", c.sigma_z_indices},
          {"paired_noise", c.paired_noise},
          {"trajectories", c.trajectories},
          {"repetitions", c.repetitions},
          {"controllers", c.controllers},
          {"variants", c.variants},
          {"window", window_json(c.window)},
          {"sim", sim_json(c.sim)},
          {"planner", planner_json(c.planner)},
          {"plan_attempts", c.plan_attempts},
          {"output_dir", c.output_dir},
          {"plan_cache", c.plan_cache},
          {"seed", c.seed}};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  {
    Reader r(j, "config");
    r.get("scene", c.scene);
    r.get("scene_seed", c.scene_seed);
    r.get("model", c.model);
    c.noise = default_noise_levels(c.model);
    r.get("parameter_file", c.parameter_file);
    r.get("true_parameter_file", c.true_parameter_file);
    if (const auto* n = r.child("noise")) {
      Reader rn(*n, "noise");
      rn.get("sigma_x", c.noise.sigma_x);
      rn.get("sigma_z", c.noise.sigma_z);
    }
    r.get("sigma_x_indices", c.sigma_x_indices);
    r.get("sigma_z_indices", c.sigma_z_indices);
    r.get("paired_noise", c.paired_noise);
    r.get("trajectories", c.trajectories);
    r.get("repetitions", c.repetitions);
    r.get("controllers", c.controllers);
    r.get("variants", c.variants);
    if (const auto* w = r.child("window")) read_window(*w, c.window);
    if (const auto* s = r.child("sim")) read_sim(*s, c.sim);
    if (const auto* p = r.child("planner")) read_planner(*p, c.planner);
    r.get("plan_attempts", c.plan_attempts);
    r.get("output_dir", c.output_dir);
    r.get("plan_cache", c.plan_cache);
    r.get("seed", c.seed);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32)};
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

ExperimentContext prepare_experiment(const ExperimentConfig& c, int jobs) {
  c.validate();
  ExperimentContext ctx;
  auto scene = std::make_shared<Scene>(make_scene(c.scene, c.scene_seed));
  ctx.scene = scene;
  ctx.model = load_model(c.model, c.parameter_file);
  ctx.true_model = c.true_parameter_file.empty() ? ctx.model : load_model_file(c.true_parameter_file);
  ctx.sdf = std::make_shared<SdfGrid>(build_sdf(*scene));
  if (scene->queries.empty()) throw UsageError("scene has no start/goal queries");

  const int n = c.trajectory_count();
  ctx.queries.resize(n);
  ctx.plans.resize(n);
  ctx.planner_seeds.resize(n);
  std::vector<std::string> errors(n);

  auto cache_path = [&](int t) {
    return std::filesystem::path(c.plan_cache) /
           (c.scene + "_" + std::to_string(c.scene_seed) + "_" + ctx.model->name() + "_t" + std::to_string(t) + "_s" +
            std::to_string(c.seed) + ".json");
  };
  auto cache_key = [&](int t) {
    nlohmann::json params = ctx.model->parameters();
    return nlohmann::json{{"scene", c.scene}, {"scene_seed", c.scene_seed}, {"model", ctx.model->name()},
                          {"parameters", params}, {"planner", planner_json(c.planner)},
                          {"plan_attempts", c.plan_attempts}, {"seed", c.seed}, {"trajectory", t}};
  };

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (int t = 0; t < n; ++t) {
    const Query& q = scene->queries[static_cast<std::size_t>(t) % scene->queries.size()];
    ctx.queries[t] = q;
    try {
      if (!c.plan_cache.empty()) {
        std::ifstream in(cache_path(t));
        if (in) {
          const nlohmann::json j = nlohmann::json::parse(in);
          if (j.at("key") == cache_key(t)) {
            ctx.plans[t] = trajectory_from_json(j.at("trajectory"));
            ctx.planner_seeds[t] = j.at("planner_seed").get<std::uint64_t>();
            continue;
          }
        }
      }
      bool ok = false;
      for (int a = 0; a < c.plan_attempts && !ok; ++a) {
        const std::uint64_t s = derive_seed(c.seed, {static_cast<std::uint64_t>(Stream::kPlanner),
                                                     static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(a)});
        PlanResult r = plan(*ctx.model, *scene, q.start, q.goal, s, c.planner);
        if (r.success) {
          r.trajectory.scene_id = c.scene;
          ctx.plans[t] = std::move(r.trajectory);
          ctx.planner_seeds[t] = s;
          ok = true;
        }
      }
      if (!ok) {
        errors[t] = "no plan for trajectory " + std::to_string(t) + " after " + std::to_string(c.plan_attempts) +
                    " attempts";
        continue;
      }
      if (!c.plan_cache.empty()) {
        std::filesystem::create_directories(c.plan_cache);
        const nlohmann::json j{{"key", cache_key(t)},
                               {"planner_seed", ctx.planner_seeds[t]},
                               {"trajectory", trajectory_to_json(ctx.plans[t])}};
        std::ofstream out(cache_path(t));
        out << j.dump() << "\n";
      }
    } catch (const std::exception& e) {
      errors[t] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
  return ctx;
}

std::vector<RunSpec> enumerate_runs(const ExperimentConfig& c) {
  std::vector<std::pair<int, int>> cells;
  if (c.paired_noise) {
    for (std::size_t i = 0; i < c.sigma_x_indices.size(); ++i) cells.emplace_back(c.sigma_x_indices[i], c.sigma_z_indices[i]);
  } else {
    for (int sx : c.sigma_x_indices) {
      for (int sz : c.sigma_z_indices) cells.emplace_back(sx, sz);
    }
  }
  std::vector<RunSpec> out;
  for (const auto& [sx, sz] : cells) {
    for (int t = 0; t < c.trajectory_count(); ++t) {
      for (int r = 0; r < c.repetition_count(); ++r) {
        const std::uint64_t seed = derive_seed(c.seed, {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(r)});
        for (const auto& ctl : c.controllers) {
          if (ctl == "open_loop") {
            out.push_back({t, r, sx, sz, ctl, "-", seed});
            continue;
          }
          for (const auto& v : c.variants) out.push_back({t, r, sx, sz, ctl, v, seed});
        }
      }
    }
  }
  return out;
}

WindowConfig apply_variant(WindowConfig w, const std::string& variant) {
  if (variant == "full" || variant == "naive_init" || variant == "-") return w;
  if (variant == "fwd10_hist0") {
    w.n_fwd = 10;
    w.n_hist = 0;
  } else if (variant == "fwd1_hist10") {
    w.n_fwd = 1;
    w.n_hist = 10;
  } else if (variant == "fwd1_hist0") {
    w.n_fwd = 1;
    w.n_hist = 0;
  } else if (variant == "no_time_var") {
    w.time_as_variable = false;
  } else if (variant == "obstacle_none") {
    w.obstacle_backend = ObstacleBackend::kNone;
  } else if (variant == "obstacle_per_obstacle") {
    w.obstacle_backend = ObstacleBackend::kPerObstacle;
  } else {
    throw UsageError("unknown variant '" + variant + "'");
  }
  return w;
}

RunResult execute_run(const ExperimentConfig& c, const ExperimentContext& ctx, const RunSpec& spec) {
  RunResult res;
  res.spec = spec;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Query& q = ctx.queries.at(static_cast<std::size_t>(spec.trajectory));
    SimTask task{ctx.scene, ctx.model, ctx.true_model, ctx.plans.at(static_cast<std::size_t>(spec.trajectory)), q.goal,
                 ctx.sdf, std::nullopt};
    if (spec.variant == "naive_init") {
      task.trajectory = straight_line_trajectory(*ctx.model, q.start, q.goal);
      task.initial = rest_state(*ctx.model, q.start);
    }
    NoiseLevels noise = c.noise;
    noise.x_index = spec.sx;
    noise.z_index = spec.sz;
    RunRecord rec = spec.controller == "open_loop"
                        ? simulate_open_loop(task, noise, spec.seed, c.sim)
                        : simulate_closed_loop(task, noise, apply_variant(c.window, spec.variant), spec.seed, c.sim);
    res.outcome = rec.outcome;
    res.metrics = compute_metrics(rec, task.trajectory);
    res.degraded_ticks = rec.degraded_ticks;
    res.dropped_observations = rec.dropped_observations;
    res.audit_violations = rec.audit_violations;
    res.ticks = rec.ticks;
  } catch (const std::exception& e) {
    res.outcome = Outcome::kSolverFailure;
    res.error = e.what();
    res.metrics = Metrics{};
  }
  res.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::vector<RunResult> execute_runs(const ExperimentConfig& c, const ExperimentContext& ctx,
                                    const std::vector<RunSpec>& specs, int jobs) {
  std::vector<RunResult> out(specs.size());
  const int n = static_cast<int>(specs.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = execute_run(c, ctx, specs[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<RunResult> execute_runs_serial(const ExperimentConfig& c, const ExperimentContext& ctx,
                                           const std::vector<RunSpec>& specs) {
  std::vector<RunResult> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(execute_run(c, ctx, s));
  return out;
}

std::vector<CellSummary> summarize(const ExperimentConfig& c, const std::vector<RunResult>& results) {
  using Key = std::tuple<std::string, std::string, int, int>;
  std::map<Key, std::vector<const RunResult*>> groups;
  for (const auto& r : results) groups[{r.spec.controller, r.spec.variant, r.spec.sx, r.spec.sz}].push_back(&r);
  const std::string model = c.parameter_file.empty() ? c.model : load_model_file(c.parameter_file)->name();
  std::vector<CellSummary> out;
  for (const auto& [key, runs] : groups) {
    CellSummary s;
    s.scene = c.scene;
    s.model = model;
    std::tie(s.controller, s.variant, s.sx, s.sz) = key;
    s.sigma_x = c.noise.sigma_x.at(static_cast<std::size_t>(s.sx));
    s.sigma_z = c.noise.sigma_z.at(static_cast<std::size_t>(s.sz));
    s.runs = static_cast<int>(runs.size());
    double cost = 0.0;
    int solve_n = 0;
    for (const RunResult* r : runs) {
      const Metrics& m = r->metrics;
      if (!r->error.empty()) ++s.errors;
      if (m.success) {
        ++s.successes;
        cost += m.normalized_cost;
      }
      s.mean_trajectory_error += m.trajectory_error;
      s.mean_estimation_error += m.estimation_error;
      s.mean_time_to_collision += m.time_to_collision;
      if (r->spec.controller == "stela" && r->error.empty()) {
        s.mean_solve_ms += m.mean_solve_ms;
        s.max_solve_ms = std::max(s.max_solve_ms, m.max_solve_ms);
        ++solve_n;
      }
    }
    const double n = static_cast<double>(s.runs);
    s.success_rate = s.successes / n;
    s.mean_cost = s.successes > 0 ? cost / s.successes : std::nan("");
    s.mean_trajectory_error /= n;
    s.mean_estimation_error /= n;
    s.mean_time_to_collision /= n;
    s.mean_solve_ms = solve_n > 0 ? s.mean_solve_ms / solve_n : 0.0;
    out.push_back(s);
  }
  return out;
}

void write_runs_csv(std::ostream& out, const ExperimentConfig& c, const std::vector<RunResult>& results) {
  std::vector<const RunResult*> sorted;
  for (const auto& r : results) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const RunResult* a, const RunResult* b) {
    return std::tie(a->spec.controller, a->spec.variant, a->spec.sx, a->spec.sz, a->spec.trajectory,
                    a->spec.repetition) < std::tie(b->spec.controller, b->spec.variant, b->spec.sx, b->spec.sz,
                                                   b->spec.trajectory, b->spec.repetition);
  });
  out << "scene,controller,variant,sigma_x_index,sigma_z_index,trajectory,repetition,seed,outcome,success,"
         "normalized_cost,trajectory_error,estimation_error,time_to_collision,ticks,degraded_ticks,"
         "dropped_observations,audit_violations,error\n";
  for (const RunResult* r : sorted) {
    const auto& s = r->spec;
    const auto& m = r->metrics;
    std::string err = r->error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << c.scene << ',' << s.controller << ',' << s.variant << ',' << s.sx << ',' << s.sz << ',' << s.trajectory
        << ',' << s.repetition << ',' << s.seed << ',' << to_string(r->outcome) << ',' << (m.success ? 1 : 0) << ','
        << fmt(m.normalized_cost) << ',' << fmt(m.trajectory_error) << ',' << fmt(m.estimation_error) << ','
        << fmt(m.time_to_collision) << ',' << r->ticks << ',' << r->degraded_ticks << ',' << r->dropped_observations
        << ',' << r->audit_violations << ',' << err << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<CellSummary>& cells, bool with_variant) {
  out << "scene,model,controller," << (with_variant ? "variant," : "")
      << "sigma_x_index,sigma_z_index,sigma_x,sigma_z,runs,successes,success_rate,mean_cost,"
         "mean_trajectory_error,mean_estimation_error,mean_time_to_collision,errors\n";
  for (const auto& s : cells) {
    out << s.scene << ',' << s.model << ',' << s.controller << ',';
    if (with_variant) out << s.variant << ',';
    out << s.sx << ',' << s.sz << ',' << fmt(s.sigma_x) << ',' << fmt(s.sigma_z) << ',' << s.runs << ','
        << s.successes << ',' << fmt(s.success_rate) << ',' << fmt(s.mean_cost) << ','
        << fmt(s.mean_trajectory_error) << ',' << fmt(s.mean_estimation_error) << ','
        << fmt(s.mean_time_to_collision) << ',' << s.errors << '\n';
  }
}

void write_timing_csv(std::ostream& out, const std::vector<CellSummary>& cells, bool with_variant) {
  out << "scene,model,controller," << (with_variant ? "variant," : "")
      << "sigma_x_index,sigma_z_index,mean_solve_ms,max_solve_ms\n";
  for (const auto& s : cells) {
    out << s.scene << ',' << s.model << ',' << s.controller << ',';
    if (with_variant) out << s.variant << ',';
    out << s.sx << ',' << s.sz << ',' << fmt(s.mean_solve_ms) << ',' << fmt(s.max_solve_ms) << '\n';
  }
}

}  // namespace stela
