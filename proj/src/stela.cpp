#include "stela/stela.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace stela {

std::string to_string(ObstacleBackend b) {
  switch (b) {
    case ObstacleBackend::kSdf: return "sdf";
    case ObstacleBackend::kPerObstacle: return "per_obstacle";
    case ObstacleBackend::kNone: return "none";
  }
  return "?";
}

ObstacleBackend obstacle_backend_from_string(const std::string& s) {
  if (s == "sdf") return ObstacleBackend::kSdf;
  if (s == "per_obstacle") return ObstacleBackend::kPerObstacle;
  if (s == "none") return ObstacleBackend::kNone;
  throw UsageError("unknown obstacle backend '" + s + "'");
}

void WindowConfig::validate() const {
  if (n_fwd < 1) throw UsageError("n_fwd must be >= 1");
  if (n_hist < 0) throw UsageError("n_hist must be >= 0");
  if (!(tick_rate_hz > 0.0)) throw UsageError("tick rate must be positive");
  if (!(obstacle_eps > 0.0)) throw UsageError("obstacle eps must be positive");
  if (!(dt_lower_factor > 0.0 && dt_upper_factor >= 1.0 && dt_lower_factor <= 1.0)) {
    throw UsageError("duration limit factors must satisfy 0 < lower <= 1 <= upper");
  }
  noise.validate();
}

StelaController::StelaController(DesiredTrajectory trajectory, ModelPtr model, std::shared_ptr<const Scene> scene,
                                 GoalRegion goal, WindowConfig config, DistanceOraclePtr sdf, double start_time)
    : traj_(std::move(trajectory)),
      model_(std::move(model)),
      scene_(std::move(scene)),
      goal_(std::move(goal)),
      cfg_(std::move(config)),
      sdf_(std::move(sdf)),
      prev_(start_time) {
  cfg_.validate();
  if (traj_.num_edges() < 1) throw UsageError("STELA needs a trajectory with at least one edge");
  if (!model_ || !scene_) throw UsageError("STELA needs a model and a scene");
  for (const auto& e : traj_.edges) {
    if (!(e.dt > 0.0) || e.dt > model_->edge_threshold() * (1.0 + 1e-9)) {
      throw UsageError("trajectory edge duration outside (0, threshold]; split the trajectory first");
    }
  }
  if (cfg_.obstacle_backend == ObstacleBackend::kSdf && !sdf_) {
    sdf_ = std::make_shared<SdfGrid>(build_sdf(*scene_));
  }
  u_integral_ = Vec::Zero(model_->control_dim());
  last_u_ = traj_.edges.front().u;
  last_u_time_ = start_time;

  j_ = 0;
  k_ = std::min(cfg_.n_fwd, plan_length());
  for (int i = 0; i <= k_; ++i) add_node(i, traj_.nodes[i]);
  for (int i = 0; i < k_; ++i) add_edge(i);
}

FactorId StelaController::add(FactorPtr f, PosteriorSide side, int index, bool baked) {
  const FactorKind kind = f->kind();
  const FactorId id = graph_.add_factor(std::move(f));
  tags_[id] = {side, kind, index, baked};
  return id;
}

void StelaController::remove(FactorId id) {
  graph_.remove_factor(id);
  tags_.erase(id);
}

void StelaController::add_node(int i, const State& init) {
  const State& plan = traj_.nodes[i];
  const Manifold m = model_->config_manifold();
  const int n = model_->config_dim();
  graph_.add_variable(Q(i), init.q);
  graph_.add_variable(Qdot(i), GroupElement::rn(init.qdot));
  auto& ids = node_la_[i];
  constexpr auto la = PosteriorSide::kLocalAdaptation;
  ids.push_back(add(std::make_shared<PriorFactor>(Q(i), plan.q, q_prior_sigmas(cfg_.noise, m, n)), la, i));
  ids.push_back(add(std::make_shared<PriorFactor>(Qdot(i), GroupElement::rn(plan.qdot),
                                                  Eigen::VectorXd::Constant(n, cfg_.noise.qdot_prior)),
                    la, i));
  switch (cfg_.obstacle_backend) {
    case ObstacleBackend::kSdf:
      ids.push_back(add(std::make_shared<ObstacleFactor>(Q(i), sdf_, cfg_.obstacle_eps, cfg_.noise.obstacle), la, i));
      break;
    case ObstacleBackend::kPerObstacle:
      for (const auto& [oid, d] :
           obstacles_within(*scene_, position_of(init.q), cfg_.obstacle_eps + cfg_.per_obstacle_radius)) {
        auto field = std::make_shared<SingleObstacleDistance>(scene_->obstacles[static_cast<std::size_t>(oid)],
                                                              scene_->footprint_radius);
        ids.push_back(add(std::make_shared<ObstacleFactor>(Q(i), field, cfg_.obstacle_eps, cfg_.noise.obstacle), la, i));
      }
      break;
    case ObstacleBackend::kNone: break;
  }
}

void StelaController::add_edge(int i) {
  const TrajectoryEdge& e = traj_.edges[i];
  const Manifold m = model_->config_manifold();
  const int n = model_->config_dim();
  constexpr auto la = PosteriorSide::kLocalAdaptation;
  auto& ids = edge_la_[i];
  graph_.add_variable(U(i), GroupElement::rn(e.u));
  ScalarArg dt = e.dt;
  if (cfg_.time_as_variable) {
    graph_.add_variable(Dt(i), GroupElement::scalar(e.dt));
    dt = Dt(i);
  }
  ids.push_back(add(std::make_shared<IntegrationFactor>(Q(i + 1), Q(i), Qdot(i), dt, m, n, cfg_.noise.integration), la, i));
  ids.push_back(add(std::make_shared<DynamicsFactor>(Qdot(i + 1), Qdot(i), U(i), dt, model_, cfg_.noise.dynamics), la, i));
  ids.push_back(add(std::make_shared<LimitsFactor>(U(i), model_->control_lower(), model_->control_upper(),
                                                   cfg_.noise.limits),
                    la, i));
  if (cfg_.time_as_variable) {
    ids.push_back(add(std::make_shared<PriorFactor>(Dt(i), GroupElement::scalar(e.dt),
                                                    Eigen::VectorXd::Constant(1, cfg_.noise.dt_prior)),
                      la, i));
    Vec lo(1), hi(1);
    lo << cfg_.dt_lower_factor * e.dt;
    hi << cfg_.dt_upper_factor * e.dt;
    ids.push_back(add(std::make_shared<LimitsFactor>(Dt(i), lo, hi, cfg_.noise.limits), la, i));
  }
}

Eigen::VectorXd StelaController::observation_sigmas() const {
  return stela::observation_sigmas(std::max(cfg_.noise.observation, cfg_.min_observation_sigma),
                                   model_->config_manifold(), model_->config_dim());
}

void StelaController::ingest_observation(const ObservationMsg& msg) {
  if (msg.stamp < prev_) {
    ++dropped_;
    return;
  }
  double dt_z = msg.stamp - prev_;
  if (!finished()) {
    const double dt_hat = dt_estimate(curr_).value_or(traj_.edges[curr_].dt);
    dt_z = std::clamp(dt_z, 0.0, dt_hat);
  }
  if (!msg.z.same_space(graph_.estimate(Q(curr_)))) throw UsageError("observation has the wrong configuration space");
  node_obs_[curr_].push_back(add(std::make_shared<ObservationFactor>(Q(curr_), Qdot(curr_), msg.z, dt_z,
                                                                     observation_sigmas()),
                                 PosteriorSide::kTrajectoryEstimation, curr_));
}

std::optional<double> StelaController::dt_estimate(int edge) const {
  if (edge < curr_ || edge >= k_) return std::nullopt;
  const double planned = traj_.edges[edge].dt;
  if (!cfg_.time_as_variable) return planned;
  // The limits are soft; keep what leaves the controller inside them.
  return std::clamp(graph_.estimate(Dt(edge)).coeffs()[0], cfg_.dt_lower_factor * planned,
                    cfg_.dt_upper_factor * planned);
}

State StelaController::node_estimate(int i) const {
  return {graph_.estimate(Q(i)), graph_.estimate(Qdot(i)).coeffs()};
}

GroupElement StelaController::pose_estimate(double now) const {
  const State x = node_estimate(curr_);
  double t = std::max(0.0, now - prev_);
  if (const auto dt = dt_estimate(curr_)) t = std::min(t, *dt);
  return integrate(x.q, x.twist(), t);
}

void StelaController::record_control(double now, const Vec& u) {
  const double span = std::max(0.0, now - last_u_time_);
  u_integral_ += last_u_ * span;
  last_u_ = u;
  last_u_time_ = now;
}

void StelaController::retire_current_edge(double now) {
  // Close the control integral of the finished edge and bake what was applied.
  record_control(now, last_u_);
  const double elapsed = std::max(now - prev_, 1e-9);
  const Vec u_applied = u_integral_ / elapsed;
  for (FactorId id : edge_la_[curr_]) remove(id);
  edge_la_.erase(curr_);
  graph_.remove_variable(U(curr_));
  if (cfg_.time_as_variable) graph_.remove_variable(Dt(curr_));

  const int i = curr_;
  const Manifold m = model_->config_manifold();
  const int n = model_->config_dim();
  constexpr auto te = PosteriorSide::kTrajectoryEstimation;
  auto& ids = edge_te_[i];
  ids.push_back(add(std::make_shared<IntegrationFactor>(Q(i + 1), Q(i), Qdot(i), elapsed, m, n, cfg_.noise.integration),
                    te, i, true));
  ids.push_back(add(std::make_shared<DynamicsFactor>(Qdot(i + 1), Qdot(i), u_applied, elapsed, model_, cfg_.noise.dynamics),
                    te, i, true));

  for (FactorId id : node_la_[i]) remove(id);
  node_la_.erase(i);
  u_integral_.setZero();
}

void StelaController::remove_node(int i) {
  for (FactorId id : node_obs_[i]) remove(id);
  node_obs_.erase(i);
  for (FactorId id : edge_te_[i]) remove(id);
  edge_te_.erase(i);
  graph_.remove_variable(Q(i));
  graph_.remove_variable(Qdot(i));
}

void StelaController::advance(double now) {
  if (finished()) return;
  retire_current_edge(now);
  curr_ += 1;
  prev_ = now;
  const int j_new = std::max(curr_ - cfg_.n_hist, 0);
  for (; j_ < j_new; ++j_) remove_node(j_);
  const int k_new = std::min(curr_ + cfg_.n_fwd, plan_length());
  for (; k_ < k_new; ++k_) {
    const State from = node_estimate(k_);
    const TrajectoryEdge& e = traj_.edges[k_];
    add_node(k_ + 1, step(*model_, from, e.u, e.dt));
    add_edge(k_);
  }
}

ControlCommand StelaController::tick(double now, std::span<const ObservationMsg> observations) {
  const auto started = std::chrono::steady_clock::now();
  TickTrace tr;
  tr.time = now;

  // Lookahead: marginal covariances of the configurations in the window.
  if (cfg_.compute_covariances) {
    std::vector<VariableKey> keys;
    for (int i = j_; i <= k_; ++i) keys.push_back(Q(i));
    try {
      const auto covs = graph_.marginal_covariances(keys, cfg_.solver.dense_limit);
      double sum = 0.0;
      for (const auto& c : covs) sum += c.trace();
      tr.covariance_trace = sum / static_cast<double>(covs.size());
    } catch (const std::exception&) {
      tr.covariance_trace = std::nan("");
    }
  }

  for (const auto& msg : observations) ingest_observation(msg);
  tr.observations = static_cast<int>(observations.size());

  SolveReport rep = graph_.solve(cfg_.solver);
  if (inject_failure_) {
    rep.status = SolveStatus::kFailure;
    rep.message = "injected failure";
  }
  tr.cost = rep.final_cost;
  tr.solve_ms = rep.wall_time_s * 1e3;
  tr.iterations = rep.iterations;

  ControlCommand cmd;
  cmd.u = Vec::Zero(model_->control_dim());
  const bool failed = rep.status == SolveStatus::kFailure;
  if (failed) {
    ++degraded_ticks_;
    spdlog::warn("STELA solve failed at t={:.3f} (curr {}): {}", now, curr_, rep.message);
  }

  if (!finished() && !goal_reached_ && goal_.contains(pose_estimate(now))) goal_reached_ = true;

  if (!finished() && !goal_reached_) {
    double dt_hat = failed ? traj_.edges[curr_].dt : *dt_estimate(curr_);
    if (now - prev_ >= dt_hat - 1e-9) {
      advance(now);
      tr.advanced = true;
    }
  }

  if (finished() || goal_reached_) {
    cmd.stopped = true;
  } else if (failed) {
    cmd.u = traj_.edges[curr_].u;
    cmd.dt_estimate = traj_.edges[curr_].dt;
    cmd.degraded = true;
  } else {
    cmd.u = graph_.estimate(U(curr_)).coeffs();
    cmd.dt_estimate = *dt_estimate(curr_);
  }
  cmd.edge = curr_;
  cmd.edge_start = prev_;
  record_control(now, cmd.u);

  tr.curr = curr_;
  tr.u = cmd.u;
  tr.dt_estimate = cmd.dt_estimate;
  tr.factors = static_cast<int>(graph_.num_factors());
  tr.variables = static_cast<int>(graph_.num_variables());
  tr.degraded = failed;
  tr.tick_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  trace_.push_back(std::move(tr));
  return cmd;
}

PosteriorSide StelaController::side_of(FactorId id) const { return tags_.at(id).side; }

AuditReport StelaController::audit() const {
  AuditReport r;
  auto fail = [&](std::string m) {
    ++r.violations;
    if (r.messages.size() < 20) r.messages.push_back(std::move(m));
  };
  constexpr auto te = PosteriorSide::kTrajectoryEstimation;
  constexpr auto la = PosteriorSide::kLocalAdaptation;
  if (graph_.num_factors() != tags_.size()) fail("untagged factors in graph");

  std::map<int, int> la_chain, la_prior, obstacle_per_node, te_chain;
  for (const auto& [id, f] : graph_.factors()) {
    auto it = tags_.find(id);
    if (it == tags_.end()) continue;
    const Tag& t = it->second;
    const std::string where = to_string(t.kind) + "@" + std::to_string(t.index);
    if (t.side == te) ++r.te_factors; else ++r.la_factors;
    switch (t.kind) {
      case FactorKind::kObservation:
        if (t.side != te || t.index < j_ || t.index > curr_) fail("observation outside history: " + where);
        break;
      case FactorKind::kIntegration:
      case FactorKind::kDynamics:
        if (t.baked) {
          if (t.side != te || t.index < j_ || t.index >= curr_) fail("baked chain factor outside history: " + where);
          ++te_chain[t.index];
        } else {
          if (t.side != la || t.index < curr_ || t.index >= k_) fail("chain factor outside horizon: " + where);
          ++la_chain[t.index];
        }
        break;
      case FactorKind::kPrior:
        if (t.side != la) fail("prior on history side: " + where);
        if (f->keys().front().role == Role::kDt) {
          if (t.index < curr_ || t.index >= k_) fail("duration prior outside horizon: " + where);
        } else {
          if (t.index < curr_ || t.index > k_) fail("prior outside horizon: " + where);
          ++la_prior[t.index];
        }
        break;
      case FactorKind::kObstacle:
        if (t.side != la || t.index < curr_ || t.index > k_) fail("obstacle factor outside horizon: " + where);
        ++obstacle_per_node[t.index];
        break;
      case FactorKind::kLimits:
        if (t.side != la || t.index < curr_ || t.index >= k_) fail("limits factor outside horizon: " + where);
        break;
      case FactorKind::kGeneric: fail("unexpected factor kind: " + where); break;
    }
  }
  for (int i = curr_; i < k_; ++i) {
    if (la_chain[i] != 2) fail("horizon edge " + std::to_string(i) + " lacks its chain factors");
  }
  for (int i = j_; i < curr_; ++i) {
    if (te_chain[i] != 2) fail("history edge " + std::to_string(i) + " lacks its chain factors");
  }
  for (int i = curr_; i <= k_; ++i) {
    if (la_prior[i] != 2) fail("horizon node " + std::to_string(i) + " lacks its priors");
    if (cfg_.obstacle_backend == ObstacleBackend::kSdf && obstacle_per_node[i] != 1) {
      fail("horizon node " + std::to_string(i) + " lacks its obstacle factor");
    }
  }
  if (j_ != std::max(curr_ - cfg_.n_hist, 0)) fail("window begin index mismatch");
  if (k_ != std::min(curr_ + cfg_.n_fwd, plan_length())) fail("window end index mismatch");
  return r;
}

void StelaController::write_trace_csv(std::ostream& out) const {
  out << "time,curr,u0,u1,dt_estimate,cost,solve_ms,iterations,factors,variables,observations,"
         "covariance_trace,degraded,advanced\n";
  char buf[512];
  for (const auto& t : trace_) {
    std::snprintf(buf, sizeof(buf), "%.6f,%d,%.9g,%.9g,%.9g,%.9g,%.4f,%d,%d,%d,%d,%.9g,%d,%d\n", t.time, t.curr,
                  t.u.size() > 0 ? t.u[0] : 0.0, t.u.size() > 1 ? t.u[1] : 0.0, t.dt_estimate, t.cost, t.solve_ms,
                  t.iterations, t.factors, t.variables, t.observations, t.covariance_trace, t.degraded ? 1 : 0,
                  t.advanced ? 1 : 0);
    out << buf;
  }
}

}  // namespace stela
