#include "stela/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace stela {

bool DynamicsModel::velocity_in_bounds(const Vec& qdot) const {
  const Vec lo = velocity_lower();
  const Vec hi = velocity_upper();
  for (int i = 0; i < qdot.size(); ++i) {
    if (qdot[i] < lo[i] || qdot[i] > hi[i]) return false;
  }
  return true;
}

Vec LtvSdeModel::local_acceleration(const Vec& u, const Vec& /*qdot*/) const { return u; }

void LtvSdeModel::acceleration_jacobians(const Vec&, const Vec&, Eigen::MatrixXd& d_u,
                                         Eigen::MatrixXd& d_qdot) const {
  d_u = Eigen::MatrixXd::Identity(2, 2);
  d_qdot = Eigen::MatrixXd::Zero(2, 2);
}

Vec MushrModel::velocity_lower() const {
  Vec v(3);
  v << 0.0, -0.3, -4.0;
  return v;
}

Vec MushrModel::velocity_upper() const {
  Vec v(3);
  v << p_.max_speed, 0.3, 4.0;
  return v;
}

double MushrModel::effective_steering(double u2) const {
  double g = 0.0;
  for (int k = 5; k >= 0; --k) g = g * u2 + p_.steering[k];
  return std::clamp(g, -p_.max_steering, p_.max_steering);
}

double MushrModel::effective_steering_derivative(double u2) const {
  double raw = 0.0;
  for (int k = 5; k >= 0; --k) raw = raw * u2 + p_.steering[k];
  if (std::abs(raw) >= p_.max_steering) return 0.0;
  double d = 0.0;
  for (int k = 5; k >= 1; --k) d = d * u2 + k * p_.steering[k];
  return d;
}

Vec MushrModel::local_acceleration(const Vec& u, const Vec& qdot) const {
  const double vx = qdot[0];
  const double vy = qdot[1];
  const double w = qdot[2];
  const double g = effective_steering(u[1]);
  Vec a(3);
  a << p_.accel_gain * u[0] - p_.drag * vx,   //
      -vy / p_.lateral_tau,                   //
      p_.angular_gain * (vx * std::tan(g) / p_.wheelbase - w);
  return a;
}

void MushrModel::acceleration_jacobians(const Vec& u, const Vec& qdot, Eigen::MatrixXd& d_u,
                                        Eigen::MatrixXd& d_qdot) const {
  const double vx = qdot[0];
  const double g = effective_steering(u[1]);
  const double sec2 = 1.0 / (std::cos(g) * std::cos(g));
  d_u = Eigen::MatrixXd::Zero(3, 2);
  d_u(0, 0) = p_.accel_gain;
  d_u(2, 1) = p_.angular_gain * vx * sec2 * effective_steering_derivative(u[1]) / p_.wheelbase;
  d_qdot = Eigen::MatrixXd::Zero(3, 3);
  d_qdot(0, 0) = -p_.drag;
  d_qdot(1, 1) = -1.0 / p_.lateral_tau;
  d_qdot(2, 0) = p_.angular_gain * std::tan(g) / p_.wheelbase;
  d_qdot(2, 2) = -p_.angular_gain;
}

std::map<std::string, double> MushrModel::parameters() const {
  std::map<std::string, double> m{{"k_a", p_.accel_gain},       {"k_w", p_.angular_gain},
                                  {"wheelbase", p_.wheelbase},  {"c_d", p_.drag},
                                  {"lateral_tau", p_.lateral_tau}, {"max_steering", p_.max_steering},
                                  {"max_speed", p_.max_speed}};
  for (int k = 0; k < 6; ++k) m["c" + std::to_string(k)] = p_.steering[k];
  return m;
}

State step(const DynamicsModel& model, const State& x, const Vec& u, double dt) {
  if (!(dt > 0.0)) throw UsageError("step: dt must be positive");
  State out;
  out.q = compose(x.q, exp_map(x.twist().scaled(dt)));
  out.qdot = x.qdot + model.local_acceleration(u, x.qdot) * dt;
  return out;
}

int substep_count(double duration, double max_step) {
  if (!(max_step > 0.0)) throw UsageError("substep_count: max_step must be positive");
  // Tolerate round-off so that e.g. 0.3 / 0.1 stays 3.
  return std::max(1, static_cast<int>(std::ceil(duration / max_step - 1e-9)));
}

State propagate(const DynamicsModel& model, const State& x, const Vec& u, double duration, double max_step) {
  const int n = substep_count(duration, max_step);
  const double h = duration / n;
  State s = x;
  for (int i = 0; i < n; ++i) s = step(model, s, u, h);
  return s;
}

ModelPtr make_model(const std::string& id) {
  if (id == "ltv_sde") return std::make_shared<LtvSdeModel>();
  if (id == "mushr") return std::make_shared<MushrModel>();
  throw UsageError("unknown model id '" + id + "'");
}

ModelPtr make_model(const std::map<std::string, std::string>& params) {
  auto get = [&](const std::string& k, double def) {
    auto it = params.find(k);
    return it == params.end() ? def : std::stod(it->second);
  };
  auto it = params.find("model");
  if (it == params.end()) throw UsageError("parameter document lacks 'model'");
  if (it->second == "ltv_sde") return std::make_shared<LtvSdeModel>(get("max_speed", 0.6));
  if (it->second != "mushr") throw UsageError("unknown model id '" + it->second + "'");
  MushrParams p;
  p.accel_gain = get("k_a", p.accel_gain);
  p.angular_gain = get("k_w", p.angular_gain);
  p.wheelbase = get("wheelbase", p.wheelbase);
  p.drag = get("c_d", p.drag);
  p.lateral_tau = get("lateral_tau", p.lateral_tau);
  p.max_steering = get("max_steering", p.max_steering);
  p.max_speed = get("max_speed", p.max_speed);
  for (int k = 0; k < 6; ++k) p.steering[k] = get("c" + std::to_string(k), p.steering[k]);
  return std::make_shared<MushrModel>(p);
}

std::map<std::string, std::string> read_parameter_file(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto c = line.find('#'); c != std::string::npos) line.resize(c);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("parameter file line " + std::to_string(lineno) + ": expected key = value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

void write_parameter_file(std::ostream& out, const DynamicsModel& model) {
  out << "model = " << model.name() << "\n";
  out << std::setprecision(17);
  for (const auto& [k, v] : model.parameters()) out << k << " = " << v << "\n";
}

ModelPtr load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open parameter file " + path);
  return make_model(read_parameter_file(in));
}

}  // namespace stela
