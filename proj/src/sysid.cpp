#include "stela/sysid.hpp"

#include "stela/factors.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace stela {

namespace {

// Parameters sort after every node so the sparse factorization sees an arrow matrix.
constexpr int kParamIndex = 1 << 28;

VariableKey param_key(int k) { return Param(kParamIndex + k); }

double plan_duration(const SysIdEpisode& e) {
  double t = 0.0;
  for (const auto& edge : e.plan) t += edge.dt;
  return t;
}

MushrParams set_fitted(MushrParams p, double k_a, double k_w, double c_d) {
  p.accel_gain = k_a;
  p.angular_gain = k_w;
  p.drag = c_d;
  return p;
}

State at_rest(const GroupElement& pose) { return {pose, Vec::Zero(3)}; }

}  // namespace

void SysIdDataset::validate() const {
  if (episodes.empty()) throw UsageError("system identification needs at least one episode");
  if (!(observation_sigma > 0.0)) throw UsageError("observation sigma must be positive");
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    const std::string where = "episode " + std::to_string(e);
    if (ep.observations.size() < 2) throw UsageError(where + " has fewer than 2 observations");
    if (ep.plan.empty()) throw UsageError(where + " has an empty plan");
    for (const auto& edge : ep.plan) {
      if (!(edge.dt > 0.0) || edge.u.size() != 2) throw UsageError(where + " has a malformed plan edge");
    }
    const double end = plan_duration(ep);
    for (const auto& o : ep.observations) {
      if (o.stamp < 0.0 || o.stamp > end + 1e-9) throw UsageError(where + " has an observation outside the plan");
      if (o.z.manifold() != Manifold::kSE2) throw UsageError(where + " has a non-SE(2) observation");
    }
  }
}

ParameterDynamicsFactor::ParameterDynamicsFactor(VariableKey qdot_next, VariableKey qdot, Vec u, double dt,
                                                 MushrParams base, double sigma)
    : Factor(FactorKind::kDynamics, {qdot_next, qdot, param_key(0), param_key(1), param_key(2)},
             Eigen::VectorXd::Constant(3, sigma)),
      u_(std::move(u)),
      dt_(dt),
      base_(base) {}

MushrParams ParameterDynamicsFactor::with(ValueRefs v) const {
  return set_fitted(base_, v[2]->coeffs()[0], v[3]->coeffs()[0], v[4]->coeffs()[0]);
}

Eigen::VectorXd ParameterDynamicsFactor::residual(ValueRefs v) const {
  const MushrModel m(with(v));
  const Vec& next = v[0]->coeffs();
  const Vec& cur = v[1]->coeffs();
  return cur + m.local_acceleration(u_, cur) * dt_ - next;
}

void ParameterDynamicsFactor::analytic_jacobians(ValueRefs v, std::vector<Eigen::MatrixXd>& j) const {
  const MushrParams p = with(v);
  const MushrModel m(p);
  const Vec& cur = v[1]->coeffs();
  Eigen::MatrixXd d_u, d_qdot;
  m.acceleration_jacobians(u_, cur, d_u, d_qdot);
  j.assign(5, Eigen::MatrixXd::Zero(3, 1));
  j[0] = -Eigen::MatrixXd::Identity(3, 3);
  j[1] = Eigen::MatrixXd::Identity(3, 3) + d_qdot * dt_;
  j[2](0, 0) = u_[0] * dt_;
  j[3](2, 0) = (cur[0] * std::tan(m.effective_steering(u_[1])) / p.wheelbase - cur[2]) * dt_;
  j[4](0, 0) = -cur[0] * dt_;
}

SysIdResult fit_parameters(const SysIdDataset& data, const MushrParams& initial, const SysIdConfig& config) {
  data.validate();
  const MushrModel initial_model(initial);

  // Structural excitation checks; a numerical check follows the solve.
  bool throttle = false;
  bool steering = false;
  for (const auto& ep : data.episodes) {
    for (const auto& e : ep.plan) {
      throttle = throttle || e.u[0] != 0.0;
      steering = steering || initial_model.effective_steering(e.u[1]) != 0.0;
    }
  }
  if (!throttle) throw UsageError("parameter k_a is not identifiable: no episode applies throttle");
  if (!steering) throw UsageError("parameter k_w is not identifiable: no episode applies a steering angle");

  FactorGraph g;
  const double init[3] = {initial.accel_gain, initial.angular_gain, initial.drag};
  for (int k = 0; k < 3; ++k) g.add_variable(param_key(k), GroupElement::rn(Vec::Constant(1, init[k])));

  const Eigen::VectorXd obs_sigmas = observation_sigmas(data.observation_sigma, Manifold::kSE2, 3);
  std::vector<int> first_node;
  int base = 0;
  for (const auto& ep : data.episodes) {
    first_node.push_back(base);
    // Initial guess: forward propagation of the initial model from the first observed pose.
    State x = at_rest(ep.observations.front().z);
    g.add_variable(Q(base), x.q);
    g.add_variable(Qdot(base), GroupElement::rn(x.qdot));
    g.add_factor(std::make_shared<PriorFactor>(Qdot(base), GroupElement::rn(Vec::Zero(3)),
                                               Eigen::VectorXd::Constant(3, config.initial_velocity_sigma)));
    std::vector<double> starts{0.0};
    for (std::size_t i = 0; i < ep.plan.size(); ++i) {
      const auto& e = ep.plan[i];
      const int a = base + static_cast<int>(i);
      x = step(initial_model, x, e.u, e.dt);
      g.add_variable(Q(a + 1), x.q);
      g.add_variable(Qdot(a + 1), GroupElement::rn(x.qdot));
      g.add_factor(std::make_shared<IntegrationFactor>(Q(a + 1), Q(a), Qdot(a), e.dt, Manifold::kSE2, 3,
                                                       config.integration_sigma));
      g.add_factor(std::make_shared<ParameterDynamicsFactor>(Qdot(a + 1), Qdot(a), e.u, e.dt, initial,
                                                             config.dynamics_sigma));
      starts.push_back(starts.back() + e.dt);
    }
    for (const auto& o : ep.observations) {
      // Node whose edge contains the stamp; the final stamp may sit on the last node.
      auto it = std::upper_bound(starts.begin(), starts.end(), o.stamp);
      int i = static_cast<int>(it - starts.begin()) - 1;
      i = std::clamp(i, 0, static_cast<int>(ep.plan.size()));
      g.add_factor(std::make_shared<ObservationFactor>(Q(base + i), Qdot(base + i), o.z, o.stamp - starts[i],
                                                       obs_sigmas));
    }
    base += static_cast<int>(ep.plan.size()) + 1;
  }

  const SolveReport rep = g.solve(config.solver);
  if (rep.status == SolveStatus::kFailure) throw std::runtime_error("system identification solve failed: " + rep.message);
  try {
    const std::array<VariableKey, 3> keys{param_key(0), param_key(1), param_key(2)};
    g.marginal_covariances(keys);
  } catch (const SingularInformationError& e) {
    const VariableKey k = e.key();
    if (k.role == Role::kParam) {
      throw UsageError("parameter " + kFittedParameters[static_cast<std::size_t>(k.index - kParamIndex)] +
                       " is not identifiable from the data");
    }
    throw UsageError(std::string("system identification problem is singular: ") + e.what());
  }

  SysIdResult r;
  r.params = set_fitted(initial, g.estimate(param_key(0)).coeffs()[0], g.estimate(param_key(1)).coeffs()[0],
                        g.estimate(param_key(2)).coeffs()[0]);
  r.fitted = {{"k_a", r.params.accel_gain}, {"k_w", r.params.angular_gain}, {"c_d", r.params.drag}};
  r.initial_cost = rep.initial_cost;
  r.final_cost = rep.final_cost;
  r.iterations = rep.iterations;

  double sq = 0.0;
  int count = 0;
  for (std::size_t e = 0; e < data.episodes.size(); ++e) {
    const auto& ep = data.episodes[e];
    std::vector<State> states;
    std::vector<double> starts{0.0};
    for (std::size_t i = 0; i <= ep.plan.size(); ++i) {
      const int n = first_node[e] + static_cast<int>(i);
      states.push_back({g.estimate(Q(n)), g.estimate(Qdot(n)).coeffs()});
      if (i < ep.plan.size()) starts.push_back(starts.back() + ep.plan[i].dt);
    }
    for (const auto& o : ep.observations) {
      auto it = std::upper_bound(starts.begin(), starts.end(), o.stamp);
      const int i = std::clamp(static_cast<int>(it - starts.begin()) - 1, 0, static_cast<int>(ep.plan.size()));
      const GroupElement pred = integrate(states[i].q, states[i].twist(), o.stamp - starts[i]);
      sq += (position_of(pred) - position_of(o.z)).squaredNorm();
      ++count;
    }
    r.states.push_back(std::move(states));
  }
  r.observation_rms = std::sqrt(sq / std::max(count, 1));
  return r;
}

std::array<double, 6> fit_steering_polynomial(const std::vector<std::pair<double, double>>& pairs) {
  std::set<double> distinct;
  for (const auto& p : pairs) distinct.insert(p.first);
  if (distinct.size() < 7) {
    throw UsageError("steering polynomial needs at least 7 distinct commands, got " + std::to_string(distinct.size()));
  }
  Eigen::MatrixXd a(static_cast<Eigen::Index>(pairs.size()), 6);
  Eigen::VectorXd b(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double pw = 1.0;
    for (int k = 0; k < 6; ++k) {
      a(static_cast<Eigen::Index>(i), k) = pw;
      pw *= pairs[i].first;
    }
    b[static_cast<Eigen::Index>(i)] = pairs[i].second;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-12);
  if (qr.rank() < 6) throw UsageError("steering polynomial design matrix is rank deficient");
  const Eigen::VectorXd c = qr.solve(b);
  return {c[0], c[1], c[2], c[3], c[4], c[5]};
}

std::vector<std::pair<double, double>> effective_steering_pairs(const SysIdDataset& data, const SysIdResult& fit,
                                                                double min_speed) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t e = 0; e < data.episodes.size() && e < fit.states.size(); ++e) {
    const auto& ep = data.episodes[e];
    const auto& states = fit.states[e];
    const std::size_t half = ep.plan.size() / 2;
    const double command = ep.plan[half].u[1];
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = half; i < ep.plan.size(); ++i) {
      const Vec& v = states[i].qdot;
      if (ep.plan[i].u[1] != command || v[0] < min_speed) continue;
      sum += std::atan(v[2] * fit.params.wheelbase / v[0]);
      ++n;
    }
    if (n > 0) out.emplace_back(command, sum / n);
  }
  return out;
}

double prediction_rms(const MushrParams& params, const SysIdDataset& data) {
  const MushrModel m(params);
  double sq = 0.0;
  int count = 0;
  for (const auto& ep : data.episodes) {
    std::vector<State> states{at_rest(ep.observations.front().z)};
    std::vector<double> starts{0.0};
    for (const auto& e : ep.plan) {
      states.push_back(step(m, states.back(), e.u, e.dt));
      starts.push_back(starts.back() + e.dt);
    }
    for (const auto& o : ep.observations) {
      auto it = std::upper_bound(starts.begin(), starts.end(), o.stamp);
      const int i = std::clamp(static_cast<int>(it - starts.begin()) - 1, 0, static_cast<int>(ep.plan.size()));
      const GroupElement pred = integrate(states[i].q, states[i].twist(), o.stamp - starts[i]);
      sq += (position_of(pred) - position_of(o.z)).squaredNorm();
      ++count;
    }
  }
  return std::sqrt(sq / std::max(count, 1));
}

SysIdDataset make_synthetic_dataset(const MushrParams& truth, double sigma_z, std::uint64_t seed,
                                    const SyntheticConfig& cfg) {
  if (!(cfg.duration > 0.0 && cfg.edge_dt > 0.0 && cfg.observation_rate_hz > 0.0) || cfg.episodes < 1) {
    throw UsageError("invalid synthetic dataset configuration");
  }
  const MushrModel m(truth);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> throttle(0.2, 0.8);
  std::uniform_real_distribution<double> coast(-0.2, 0.2);
  std::uniform_real_distribution<double> steer(-0.9, 0.9);
  std::uniform_real_distribution<double> offset(0.0, cfg.max_stamp_offset);
  std::normal_distribution<double> noise(0.0, 1.0);

  SysIdDataset d;
  d.observation_sigma = std::max(sigma_z, 1e-3);
  const int edges = static_cast<int>(std::lround(cfg.duration / cfg.edge_dt));
  for (int e = 0; e < cfg.episodes; ++e) {
    SysIdEpisode ep;
    Vec u1(2), u2(2);
    u1 << throttle(rng), steer(rng);
    u2 << coast(rng), u1[1];
    std::vector<State> states{at_rest(GroupElement::se2(0.0, 0.0, 0.0))};
    for (int i = 0; i < edges; ++i) {
      ep.plan.push_back({i < edges / 2 ? u1 : u2, cfg.edge_dt});
      states.push_back(step(m, states.back(), ep.plan.back().u, cfg.edge_dt));
    }
    const double end = edges * cfg.edge_dt;
    for (int k = 0;; ++k) {
      double t = k / cfg.observation_rate_hz + (k == 0 ? 0.0 : offset(rng));
      if (t > end) break;
      const int i = std::min(static_cast<int>(t / cfg.edge_dt), edges);
      const double dt_z = std::max(0.0, t - i * cfg.edge_dt);
      GroupElement z = integrate(states[i].q, states[i].twist(), dt_z);
      if (sigma_z > 0.0) {
        const Vec& c = z.coeffs();
        z = GroupElement::se2(c[0] + sigma_z * noise(rng), c[1] + sigma_z * noise(rng),
                              c[2] + 0.5 * sigma_z * noise(rng));
      }
      ep.observations.push_back({z, t});
    }
    d.episodes.push_back(std::move(ep));
  }
  return d;
}

void write_dataset_csv(std::ostream& out, const SysIdDataset& data) {
  out << "episode,t,u1,u2,z_x,z_y,z_theta\n";
  char buf[256];
  for (std::size_t e = 0; e < data.episodes.size(); ++e) {
    const auto& ep = data.episodes[e];
    double start = 0.0;
    std::size_t edge = 0;
    for (const auto& o : ep.observations) {
      while (edge + 1 < ep.plan.size() && o.stamp >= start + ep.plan[edge].dt) start += ep.plan[edge++].dt;
      const Vec& u = ep.plan[edge].u;
      const Vec& z = o.z.coeffs();
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e, o.stamp, u[0], u[1], z[0], z[1],
                    z[2]);
      out << buf;
    }
  }
}

SysIdDataset read_dataset_csv(std::istream& in, double edge_dt, double observation_sigma) {
  if (!(edge_dt > 0.0)) throw UsageError("edge duration must be positive");
  struct Row {
    double t, u1, u2;
  };
  std::map<long, std::pair<std::vector<Row>, std::vector<ObservationMsg>>> eps;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line.rfind("episode", 0) == 0)) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw UsageError("dataset line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (v.size() != 7) throw UsageError("dataset line " + std::to_string(lineno) + ": expected 7 columns");
    auto& [rows, obs] = eps[std::lround(v[0])];
    rows.push_back({v[1], v[2], v[3]});
    obs.push_back({GroupElement::se2(v[4], v[5], v[6]), v[1]});
  }
  SysIdDataset d;
  d.observation_sigma = observation_sigma;
  for (auto& [id, pr] : eps) {
    auto& [rows, obs] = pr;
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rows[a].t < rows[b].t; });
    SysIdEpisode ep;
    for (auto i : order) ep.observations.push_back(obs[i]);
    const double end = rows[order.back()].t;
    const int edges = std::max(1, static_cast<int>(std::ceil(end / edge_dt - 1e-9)));
    std::vector<double> stamps;
    for (auto i : order) stamps.push_back(rows[i].t);
    for (int k = 0; k < edges; ++k) {
      // Prefer the first row stamped inside the edge, else the latest one before it.
      const double t0 = k * edge_dt;
      auto it = std::lower_bound(stamps.begin(), stamps.end(), t0);
      std::size_t r = static_cast<std::size_t>(it - stamps.begin());
      if (r == stamps.size() || stamps[r] >= t0 + edge_dt) r = r > 0 ? r - 1 : 0;
      Vec u(2);
      u << rows[order[r]].u1, rows[order[r]].u2;
      ep.plan.push_back({u, edge_dt});
    }
    d.episodes.push_back(std::move(ep));
  }
  d.validate();
  return d;
}

}  // namespace stela
