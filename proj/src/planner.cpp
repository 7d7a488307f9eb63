#include "stela/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace stela {

double DesiredTrajectory::duration() const {
  double d = 0.0;
  for (const auto& e : edges) d += e.dt;
  return d;
}

namespace {

nlohmann::json vec_json(const Vec& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  return out;
}

Vec json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() > static_cast<std::size_t>(kMaxGroupDim)) throw UsageError("vector too long");
  Vec out(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
  return out;
}

}  // namespace

nlohmann::json trajectory_to_json(const DesiredTrajectory& t) {
  nlohmann::json j;
  j["model"] = t.model_id;
  j["scene"] = t.scene_id;
  const bool se2 = !t.nodes.empty() && t.nodes.front().q.manifold() == Manifold::kSE2;
  j["manifold"] = se2 ? "se2" : "rn";
  j["duration"] = t.duration();
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const auto& n : t.nodes) nodes.push_back({{"q", vec_json(n.q.coeffs())}, {"qdot", vec_json(n.qdot)}});
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& e : t.edges) edges.push_back({{"u", vec_json(e.u)}, {"dt", e.dt}});
  return j;
}

DesiredTrajectory trajectory_from_json(const nlohmann::json& j) {
  DesiredTrajectory t;
  t.model_id = j.at("model").get<std::string>();
  t.scene_id = j.value("scene", std::string{});
  const std::string m = j.at("manifold").get<std::string>();
  if (m != "se2" && m != "rn") throw UsageError("unknown manifold '" + m + "'");
  const Manifold man = m == "se2" ? Manifold::kSE2 : Manifold::kRn;
  for (const auto& n : j.at("nodes")) t.nodes.push_back({GroupElement(man, json_vec(n.at("q"))), json_vec(n.at("qdot"))});
  for (const auto& e : j.at("edges")) t.edges.push_back({json_vec(e.at("u")), e.at("dt").get<double>()});
  if (!t.nodes.empty() && t.nodes.size() != t.edges.size() + 1) throw UsageError("trajectory: node/edge count mismatch");
  return t;
}

double rollout_error(const DynamicsModel& model, const DesiredTrajectory& t) {
  double worst = 0.0;
  for (int i = 0; i < t.num_edges(); ++i) {
    const State next = step(model, t.nodes[i], t.edges[i].u, t.edges[i].dt);
    worst = std::max(worst, local(next.q, t.nodes[i + 1].q).cwiseAbs().maxCoeff());
    worst = std::max(worst, (next.qdot - t.nodes[i + 1].qdot).cwiseAbs().maxCoeff());
  }
  return worst;
}

DesiredTrajectory split_edges(const DynamicsModel& model, const DesiredTrajectory& t, double threshold) {
  if (!(threshold > 0.0)) throw UsageError("split_edges: threshold must be positive");
  DesiredTrajectory out;
  out.model_id = t.model_id;
  out.scene_id = t.scene_id;
  if (t.nodes.empty()) return out;
  out.nodes.push_back(t.nodes.front());
  for (const auto& e : t.edges) {
    if (e.dt <= threshold) {
      out.nodes.push_back(step(model, out.nodes.back(), e.u, e.dt));
      out.edges.push_back(e);
      continue;
    }
    const int n = substep_count(e.dt, threshold);
    const double h = e.dt / n;
    for (int k = 0; k < n; ++k) {
      out.nodes.push_back(step(model, out.nodes.back(), e.u, h));
      out.edges.push_back({e.u, h});
    }
  }
  return out;
}

double state_distance(const State& a, const State& b) {
  const Vec& qa = a.q.coeffs();
  const Vec& qb = b.q.coeffs();
  double d2 = (qa.head<2>() - qb.head<2>()).squaredNorm();
  if (a.q.manifold() == Manifold::kSE2) {
    const double dth = 0.3 * wrap_angle(qa[2] - qb[2]);
    d2 += dth * dth;
  }
  d2 += 0.01 * (a.qdot - b.qdot).squaredNorm();
  return std::sqrt(d2);
}

MotionTree::MotionTree(Eigen::Vector2d lower, Eigen::Vector2d upper, double cell)
    : lower_(std::move(lower)), cell_(cell) {
  if (!(cell > 0.0)) throw UsageError("MotionTree: cell size must be positive");
  nx_ = std::max(1, static_cast<int>(std::ceil((upper.x() - lower_.x()) / cell_)));
  ny_ = std::max(1, static_cast<int>(std::ceil((upper.y() - lower_.y()) / cell_)));
  buckets_.resize(static_cast<std::size_t>(nx_) * ny_);
}

std::pair<int, int> MotionTree::cell_coords(const Eigen::Vector2d& p) const {
  const Eigen::Vector2d g = (p - lower_) / cell_;
  return {std::clamp(static_cast<int>(std::floor(g.x())), 0, nx_ - 1),
          std::clamp(static_cast<int>(std::floor(g.y())), 0, ny_ - 1)};
}

int MotionTree::add(TreeNode n) {
  const auto [ix, iy] = cell_coords(position_of(n.x.q));
  nodes_.push_back(std::move(n));
  const int id = size() - 1;
  buckets_[static_cast<std::size_t>(cell_of(ix, iy))].push_back(id);
  return id;
}

int MotionTree::nearest(const State& x) const {
  if (nodes_.empty()) throw UsageError("nearest: empty tree");
  // Rings of cells around the query; the weighted distance is bounded below by
  // the position distance, which is at least (ring - 1) * cell for ring >= 1.
  const Eigen::Vector2d p = position_of(x.q);
  const auto [cx, cy] = cell_coords(p);
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  const int max_ring = std::max(nx_, ny_);
  for (int ring = 0; ring <= max_ring; ++ring) {
    if (best >= 0 && (ring - 1) * cell_ > best_d) break;
    for (int iy = cy - ring; iy <= cy + ring; ++iy) {
      if (iy < 0 || iy >= ny_) continue;
      const bool edge_row = iy == cy - ring || iy == cy + ring;
      for (int ix = cx - ring; ix <= cx + ring; ix += (edge_row ? 1 : 2 * ring)) {
        if (ix >= 0 && ix < nx_) {
          for (int id : buckets_[static_cast<std::size_t>(cell_of(ix, iy))]) {
            const double d = state_distance(nodes_[static_cast<std::size_t>(id)].x, x);
            if (d < best_d || (d == best_d && id < best)) {
              best_d = d;
              best = id;
            }
          }
        }
        if (ring == 0) break;
      }
    }
  }
  return best;
}

int MotionTree::nearest_brute_force(const State& x) const {
  if (nodes_.empty()) throw UsageError("nearest: empty tree");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < size(); ++i) {
    const double d = state_distance(nodes_[static_cast<std::size_t>(i)].x, x);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

GroupElement pose_element(const DynamicsModel& model, const Eigen::Vector3d& pose) {
  if (model.config_manifold() == Manifold::kSE2) return GroupElement::se2(pose.x(), pose.y(), pose.z());
  Vec p(2);
  p << pose.x(), pose.y();
  return GroupElement::rn(p);
}

State rest_state(const DynamicsModel& model, const Eigen::Vector3d& pose) {
  return {pose_element(model, pose), Vec::Zero(model.config_dim())};
}

namespace {

// Clearance along the constant-twist arc of one step, sampled at `spacing`.
bool arc_is_free(const Scene& scene, const State& x, double h, double spacing, double margin) {
  const Tangent v = x.twist();
  const double speed = x.qdot.head<2>().norm();
  const int n = std::max(1, static_cast<int>(std::ceil(speed * h / spacing)));
  for (int k = 1; k <= n; ++k) {
    const Eigen::Vector2d p = position_of(integrate(x.q, v, h * k / n));
    if (!scene.in_bounds(p) || exact_clearance(scene, p).distance < margin) return false;
  }
  return true;
}

}  // namespace

bool trajectory_collides(const Scene& scene, const DesiredTrajectory& t, double spacing, double margin) {
  if (t.nodes.empty()) return false;
  if (exact_clearance(scene, position_of(t.nodes.front().q)).distance < margin) return true;
  for (int i = 0; i < t.num_edges(); ++i) {
    const State& x = t.nodes[i];
    const double speed = x.qdot.head<2>().norm();
    const int n = std::max(1, static_cast<int>(std::ceil(speed * t.edges[i].dt / spacing)));
    for (int k = 1; k <= n; ++k) {
      const Eigen::Vector2d p = position_of(integrate(x.q, x.twist(), t.edges[i].dt * k / n));
      if (exact_clearance(scene, p).distance < margin) return true;
    }
  }
  return false;
}

PlanResult plan(const DynamicsModel& model, const Scene& scene, const Eigen::Vector3d& start,
                const Eigen::Vector3d& goal, std::uint64_t seed, const PlannerConfig& config) {
  const State x0 = rest_state(model, start);
  if (exact_clearance(scene, position_of(x0.q)).distance < config.clearance_margin) {
    throw UsageError("plan: start configuration is in collision");
  }
  const GoalRegion region{pose_element(model, goal), config.goal_radius};
  if (!(region.radius > 0.0)) throw UsageError("plan: empty goal region");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec ulo = model.control_lower(), uhi = model.control_upper();
  const Vec vlo = model.velocity_lower(), vhi = model.velocity_upper();
  const double threshold = model.edge_threshold();

  MotionTree tree(scene.lower, scene.upper);
  tree.add({x0, -1, Vec::Zero(model.control_dim()), 0.0, 0, 0.0});
  PlanResult result;
  int best_goal = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  // Admissible cost-to-go: straight-line distance to the goal ball at top speed.
  const double top_speed = model.velocity_upper().head(model.config_manifold() == Manifold::kSE2 ? 1 : 2).norm();
  auto cost_to_go = [&](const State& x) {
    return std::max(0.0, (position_of(x.q) - position_of(region.center)).norm() - region.radius) / top_speed;
  };

  for (result.iterations = 0; result.iterations < config.max_iterations; ++result.iterations) {
    State sample;
    Vec v(model.config_dim());
    for (int i = 0; i < v.size(); ++i) v[i] = vlo[i] + (vhi[i] - vlo[i]) * unit(rng);
    if (unit(rng) < config.goal_bias) {
      sample = {region.center, v};
    } else {
      Eigen::Vector3d pose(scene.lower.x() + (scene.upper.x() - scene.lower.x()) * unit(rng),
                           scene.lower.y() + (scene.upper.y() - scene.lower.y()) * unit(rng),
                           -std::numbers::pi + 2.0 * std::numbers::pi * unit(rng));
      sample = {pose_element(model, pose), v};
    }
    const int parent = tree.nearest(sample);
    const TreeNode& p = tree.node(parent);

    std::optional<TreeNode> chosen;
    double chosen_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < config.control_samples; ++c) {
      Vec u(model.control_dim());
      for (int i = 0; i < u.size(); ++i) u[i] = ulo[i] + (uhi[i] - ulo[i]) * unit(rng);
      const double duration = config.min_duration + (config.max_duration - config.min_duration) * unit(rng);
      const double cost = p.cost + duration;
      if (cost >= best_cost) continue;

      const int n = substep_count(duration, threshold);
      const double h = duration / n;
      State x = p.x;
      bool ok = true;
      for (int k = 0; k < n && ok; ++k) {
        ok = arc_is_free(scene, x, h, config.check_spacing, config.clearance_margin);
        x = step(model, x, u, h);
        ok = ok && model.velocity_in_bounds(x.qdot);
      }
      if (!ok || cost + cost_to_go(x) >= best_cost) continue;
      const double d = state_distance(x, sample);
      if (d < chosen_d) {
        chosen_d = d;
        chosen = TreeNode{x, parent, u, duration, n, cost};
      }
    }
    if (!chosen) continue;
    const int id = tree.add(*chosen);
    if (region.contains(chosen->x.q) && chosen->cost < best_cost) {
      best_cost = chosen->cost;
      best_goal = id;
    }
  }

  result.tree_size = tree.size();
  if (best_goal < 0) return result;

  std::vector<int> chain;
  for (int id = best_goal; id > 0; id = tree.node(id).parent) chain.push_back(id);
  std::reverse(chain.begin(), chain.end());
  DesiredTrajectory& t = result.trajectory;
  t.model_id = model.name();
  t.scene_id = to_string(scene.kind) + ":" + std::to_string(scene.seed);
  t.nodes.push_back(x0);
  for (int id : chain) {
    const TreeNode& nd = tree.node(id);
    const double h = nd.duration / nd.substeps;
    for (int k = 0; k < nd.substeps; ++k) {
      t.nodes.push_back(step(model, t.nodes.back(), nd.u, h));
      t.edges.push_back({nd.u, h});
    }
  }
  result.success = true;
  result.cost = t.duration();
  return result;
}

DesiredTrajectory straight_line_trajectory(const DynamicsModel& model, const Eigen::Vector3d& start,
                                           const Eigen::Vector3d& goal) {
  const Eigen::Vector2d d = goal.head<2>() - start.head<2>();
  const double speed = 0.5 * model.velocity_upper()[0];
  const double total = d.norm() / speed;
  const double threshold = model.edge_threshold();
  const int n = std::max(1, substep_count(total, threshold));
  const double h = total / n;
  const double heading = std::atan2(d.y(), d.x());

  DesiredTrajectory t;
  t.model_id = model.name();
  Vec v = Vec::Zero(model.config_dim());
  if (model.config_manifold() == Manifold::kSE2) {
    v[0] = speed;
  } else {
    v.head<2>() = d / total;
  }
  for (int i = 0; i <= n; ++i) {
    const Eigen::Vector2d p = start.head<2>() + d * (static_cast<double>(i) / n);
    t.nodes.push_back({pose_element(model, {p.x(), p.y(), heading}), v});
    if (i < n) t.edges.push_back({Vec::Zero(model.control_dim()), h});
  }
  return t;
}

}  // namespace stela
