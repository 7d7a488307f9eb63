#include "stela/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>

namespace stela {

double NoiseLevels::sx() const { return sigma_x.at(static_cast<std::size_t>(x_index)); }
double NoiseLevels::sz() const { return sigma_z.at(static_cast<std::size_t>(z_index)); }

void NoiseLevels::validate() const {
  if (sigma_x.empty() || sigma_z.empty() || sigma_x.front() != 0.0 || sigma_z.front() != 0.0) {
    throw UsageError("noise grids must start with an exact zero level");
  }
  for (double s : sigma_x) {
    if (s < 0.0) throw UsageError("negative dynamics noise level");
  }
  for (double s : sigma_z) {
    if (s < 0.0) throw UsageError("negative observation noise level");
  }
  if (x_index < 0 || x_index >= static_cast<int>(sigma_x.size()) || z_index < 0 ||
      z_index >= static_cast<int>(sigma_z.size())) {
    throw UsageError("noise index out of range");
  }
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::kSuccess: return "success";
    case Outcome::kCollision: return "collision";
    case Outcome::kTimeout: return "timeout";
    case Outcome::kSolverDegradedSuccess: return "solver_degraded_success";
    case Outcome::kSolverFailure: return "solver_failure";
  }
  return "?";
}

std::mt19937_64 make_stream(std::uint64_t master, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(master & 0xffffffffu), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

double pose_distance(const GroupElement& a, const GroupElement& b) {
  const Vec& x = a.coeffs();
  const Vec& y = b.coeffs();
  double d2 = (x.head<2>() - y.head<2>()).squaredNorm();
  if (a.manifold() == Manifold::kSE2) {
    const double dth = 0.3 * wrap_angle(x[2] - y[2]);
    d2 += dth * dth;
  }
  return std::sqrt(d2);
}

namespace {

class Driver {
 public:
  virtual ~Driver() = default;
  virtual ControlCommand tick(double now, std::span<const ObservationMsg> obs) = 0;
  virtual std::optional<GroupElement> estimate(double now) const = 0;
};

class OpenLoopDriver final : public Driver {
 public:
  OpenLoopDriver(const DesiredTrajectory& t, int control_dim) : t_(t), dim_(control_dim) {}

  ControlCommand tick(double now, std::span<const ObservationMsg>) override {
    while (edge_ < t_.num_edges() && now - start_ >= t_.edges[edge_].dt - 1e-9) {
      start_ = now;
      ++edge_;
    }
    ControlCommand c;
    c.edge = edge_;
    c.edge_start = start_;
    if (edge_ >= t_.num_edges()) {
      c.u = Vec::Zero(dim_);
      c.stopped = true;
    } else {
      c.u = t_.edges[edge_].u;
      c.dt_estimate = t_.edges[edge_].dt;
    }
    return c;
  }
  std::optional<GroupElement> estimate(double) const override { return std::nullopt; }

 private:
  const DesiredTrajectory& t_;
  int dim_;
  int edge_ = 0;
  double start_ = 0.0;
};

class StelaDriver final : public Driver {
 public:
  explicit StelaDriver(StelaController& c, bool audit) : c_(c), audit_(audit) {}
  ControlCommand tick(double now, std::span<const ObservationMsg> obs) override {
    ControlCommand cmd = c_.tick(now, obs);
    if (audit_) violations += c_.audit().violations;
    return cmd;
  }
  std::optional<GroupElement> estimate(double now) const override { return c_.pose_estimate(now); }
  int violations = 0;

 private:
  StelaController& c_;
  bool audit_;
};

// First time in (0, h] at which the constant-twist arc from x hits an obstacle.
std::optional<double> arc_collision(const Scene& scene, const State& x, double h, double spacing) {
  const Tangent v = x.twist();
  const double speed = x.qdot.head<2>().norm();
  const int n = std::max(1, static_cast<int>(std::ceil(speed * h / spacing)));
  for (int k = 1; k <= n; ++k) {
    const double t = h * k / n;
    if (collides(scene, position_of(integrate(x.q, v, t)))) return t;
  }
  return std::nullopt;
}

GroupElement observe(const GroupElement& q, double sz, std::mt19937_64& rng) {
  if (sz <= 0.0) return q;
  std::normal_distribution<double> n(0.0, sz);
  Vec c = q.coeffs();
  c[0] += n(rng);
  c[1] += n(rng);
  if (q.manifold() == Manifold::kSE2) {
    c[2] += 0.5 * n(rng);
    return GroupElement::se2(c[0], c[1], c[2]);
  }
  return GroupElement::rn(c);
}

RunRecord run(const SimTask& task, const NoiseLevels& noise, std::uint64_t seed, const SimConfig& cfg, Driver& driver,
              const std::string& name) {
  noise.validate();
  const DesiredTrajectory& plan = task.trajectory;
  if (plan.nodes.empty()) throw UsageError("simulation needs a trajectory");
  const DynamicsModel& truth_model = task.true_model ? *task.true_model : *task.model;
  const Scene& scene = *task.scene;
  const GoalRegion goal{pose_element(*task.model, task.goal), cfg.goal_radius, cfg.goal_angle_weight};

  auto dyn_rng = make_stream(seed, Stream::kDynamics);
  auto obs_rng = make_stream(seed, Stream::kObservation);
  auto jit_rng = make_stream(seed, Stream::kJitter);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(0.0, cfg.max_timestamp_jitter);
  const double sx = noise.sx();
  const double sz = noise.sz();

  RunRecord rec;
  rec.seed = seed;
  rec.controller = name;
  rec.plan_duration = plan.duration();
  const double timeout = cfg.timeout_factor * rec.plan_duration;

  State x = task.initial ? *task.initial : plan.nodes.front();
  const int n = truth_model.config_dim();
  Vec acc = Vec::Zero(n);  // velocity change accumulated over the current edge
  Vec u = Vec::Zero(truth_model.control_dim());
  bool stopped = false;
  int edge = 0;
  double t = 0.0;
  int tick_count = 0;
  int obs_count = 0;
  double next_tick = 0.0;
  double next_obs = 0.0;
  double deadline = std::numeric_limits<double>::infinity();
  std::vector<ObservationMsg> pending;

  auto finish = [&](Outcome o) {
    rec.end_time = t;
    rec.outcome = o;
    return rec;
  };

  // A run that starts inside the goal is trivially complete.
  if (goal.contains(x.q)) return finish(Outcome::kSuccess);

  while (true) {
    const double t_event = std::min({next_tick, next_obs, deadline, timeout});
    // Integrate the true robot up to the event.
    const double span = t_event - t;
    if (span > 0.0) {
      const int steps = std::max(1, static_cast<int>(std::ceil(span / cfg.max_substep - 1e-9)));
      const double h = span / steps;
      for (int s = 0; s < steps; ++s) {
        if (const auto hit = arc_collision(scene, x, h, cfg.collision_spacing)) {
          t += *hit;
          rec.collision_time = t;
          return finish(Outcome::kCollision);
        }
        acc += truth_model.local_acceleration(u, x.qdot) * h;
        x.q = integrate(x.q, x.twist(), h);
        if (stopped) {
          x.qdot += acc;
          acc.setZero();
        }
        if (sx > 0.0) {
          const double scale = sx * std::sqrt(h);
          for (int i = 0; i < n; ++i) x.qdot[i] += scale * unit_normal(dyn_rng);
        }
        t = (s + 1 == steps) ? t_event : t + h;
        if (goal.contains(x.q)) {
          return finish(rec.degraded_ticks > 0 ? Outcome::kSolverDegradedSuccess : Outcome::kSuccess);
        }
      }
    }
    t = t_event;
    if (t >= timeout) return finish(rec.degraded_ticks > 0 ? Outcome::kSolverFailure : Outcome::kTimeout);

    if (t == next_obs) {
      ObservationMsg m{observe(x.q, sz, obs_rng), t};
      // Timestamp noise is part of the observation noise; the zero level is exact.
      if (sz > 0.0) m.stamp += jitter(jit_rng);
      pending.push_back(m);
      rec.observations.push_back(m);
      next_obs = static_cast<double>(++obs_count) / cfg.observation_rate_hz;
    }
    if (t == next_tick || t == deadline) {
      std::stable_sort(pending.begin(), pending.end(),
                       [](const ObservationMsg& a, const ObservationMsg& b) { return a.stamp < b.stamp; });
      auto split = std::find_if(pending.begin(), pending.end(), [&](const ObservationMsg& m) { return m.stamp > t; });
      const std::vector<ObservationMsg> deliver(pending.begin(), split);
      pending.erase(pending.begin(), split);

      const ControlCommand cmd = driver.tick(t, deliver);
      ++rec.ticks;
      if (cmd.degraded) ++rec.degraded_ticks;
      if (cmd.edge != edge) {
        x.qdot += acc;
        acc.setZero();
        edge = cmd.edge;
      }
      u = cmd.u;
      stopped = cmd.stopped;
      deadline = stopped ? std::numeric_limits<double>::infinity() : cmd.edge_start + cmd.dt_estimate;
      if (deadline <= t) deadline = std::numeric_limits<double>::infinity();

      RunSample smp;
      smp.time = t;
      smp.truth = x;
      smp.u = u;
      smp.edge = edge;
      if (auto e = driver.estimate(t)) {
        smp.estimate = *e;
        rec.has_estimates = true;
      } else {
        smp.estimate = x.q;
      }
      rec.samples.push_back(std::move(smp));
      if (t == next_tick) next_tick = static_cast<double>(++tick_count) / cfg.tick_rate_hz;
    }
  }
}

}  // namespace

RunRecord simulate_open_loop(const SimTask& task, const NoiseLevels& noise, std::uint64_t seed,
                             const SimConfig& config) {
  OpenLoopDriver d(task.trajectory, task.model->control_dim());
  return run(task, noise, seed, config, d, "open_loop");
}

RunRecord simulate_closed_loop(const SimTask& task, const NoiseLevels& noise, const WindowConfig& window,
                               std::uint64_t seed, const SimConfig& config, std::vector<TickTrace>* trace) {
  WindowConfig w = window;
  w.noise.observation = std::max(noise.sz(), w.min_observation_sigma);
  DistanceOraclePtr sdf = task.sdf;
  if (!sdf && w.obstacle_backend == ObstacleBackend::kSdf) sdf = std::make_shared<SdfGrid>(build_sdf(*task.scene));
  const GoalRegion goal{pose_element(*task.model, task.goal), config.goal_radius, config.goal_angle_weight};
  StelaController c(task.trajectory, task.model, task.scene, goal, w, sdf, 0.0);
  StelaDriver d(c, config.audit);
  RunRecord rec = run(task, noise, seed, config, d, "stela");
  rec.dropped_observations = c.dropped_observations();
  rec.audit_violations = d.violations;
  rec.solve_ms.reserve(c.trace().size());
  for (const auto& tr : c.trace()) rec.solve_ms.push_back(tr.tick_ms);
  if (trace) *trace = c.trace();
  return rec;
}

namespace {

struct PlanPolyline {
  std::vector<Eigen::Vector2d> p;
  std::vector<double> theta;
  bool se2 = false;
};

PlanPolyline dense_plan(const DesiredTrajectory& plan, double spacing) {
  PlanPolyline poly;
  if (plan.nodes.empty()) return poly;
  poly.se2 = plan.nodes.front().q.manifold() == Manifold::kSE2;
  auto push = [&](const GroupElement& q) {
    poly.p.push_back(position_of(q));
    poly.theta.push_back(poly.se2 ? q.theta() : 0.0);
  };
  push(plan.nodes.front().q);
  for (int i = 0; i < plan.num_edges(); ++i) {
    const State& x = plan.nodes[i];
    const double dt = plan.edges[i].dt;
    const double len = x.qdot.head<2>().norm() * dt;
    const double turn = poly.se2 ? std::abs(x.qdot[2]) * dt : 0.0;
    const int n = std::max(1, static_cast<int>(std::ceil(std::max(len, turn) / spacing)));
    for (int k = 1; k <= n; ++k) push(integrate(x.q, x.twist(), dt * k / n));
  }
  return poly;
}

double distance_to_plan(const PlanPolyline& poly, const GroupElement& q) {
  const Eigen::Vector2d p = position_of(q);
  const double th = poly.se2 ? q.theta() : 0.0;
  double best = std::numeric_limits<double>::infinity();
  if (poly.p.size() == 1) return (p - poly.p.front()).norm();
  for (std::size_t i = 0; i + 1 < poly.p.size(); ++i) {
    const Eigen::Vector2d a = poly.p[i];
    const Eigen::Vector2d d = poly.p[i + 1] - a;
    const double l2 = d.squaredNorm();
    const double s = l2 > 0.0 ? std::clamp((p - a).dot(d) / l2, 0.0, 1.0) : 0.0;
    double d2 = (a + s * d - p).squaredNorm();
    if (d2 >= best * best) continue;
    if (poly.se2) {
      const double ref = poly.theta[i] + s * wrap_angle(poly.theta[i + 1] - poly.theta[i]);
      const double dth = 0.3 * wrap_angle(th - ref);
      d2 += dth * dth;
    }
    best = std::min(best, std::sqrt(d2));
  }
  return best;
}

}  // namespace

Metrics compute_metrics(const RunRecord& record, const DesiredTrajectory& plan) {
  Metrics m;
  m.success = succeeded(record.outcome);
  m.normalized_cost = record.plan_duration > 0.0 ? record.end_time / record.plan_duration : 0.0;
  if (!record.samples.empty()) {
    const PlanPolyline poly = dense_plan(plan, 0.01);
    double traj = 0.0;
    double est = 0.0;
    for (const auto& s : record.samples) {
      traj += distance_to_plan(poly, s.truth.q);
      if (record.has_estimates) est += pose_distance(s.estimate, s.truth.q);
    }
    m.trajectory_error = traj / static_cast<double>(record.samples.size());
    m.estimation_error = est / static_cast<double>(record.samples.size());
  }
  if (!record.solve_ms.empty()) {
    double sum = 0.0;
    for (double v : record.solve_ms) {
      sum += v;
      m.max_solve_ms = std::max(m.max_solve_ms, v);
    }
    m.mean_solve_ms = sum / static_cast<double>(record.solve_ms.size());
  }
  if (record.outcome == Outcome::kCollision && record.plan_duration > 0.0) {
    m.time_to_collision = std::min(1.0, record.collision_time / record.plan_duration);
  }
  return m;
}

void write_run_csv(std::ostream& out, const RunRecord& record) {
  out << "time,edge,x,y,theta,vx,vy,w,est_x,est_y,est_theta,u0,u1\n";
  char buf[512];
  auto c = [](const Vec& v, int i) { return i < v.size() ? v[i] : 0.0; };
  for (const auto& s : record.samples) {
    const Vec& q = s.truth.q.coeffs();
    const Vec& e = s.estimate.coeffs();
    std::snprintf(buf, sizeof(buf), "%.6f,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.time, s.edge,
                  c(q, 0), c(q, 1), c(q, 2), c(s.truth.qdot, 0), c(s.truth.qdot, 1), c(s.truth.qdot, 2), c(e, 0),
                  c(e, 1), c(e, 2), c(s.u, 0), c(s.u, 1));
    out << buf;
  }
}

}  // namespace stela
