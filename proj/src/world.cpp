#include "stela/world.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace stela {

double obstacle_distance(const Obstacle& o, const Eigen::Vector2d& p, Eigen::Vector2d* gradient) {
  if (const auto* d = std::get_if<Disc>(&o)) {
    const Eigen::Vector2d v = p - d->center;
    const double n = v.norm();
    if (gradient) *gradient = n > 1e-12 ? Eigen::Vector2d(v / n) : Eigen::Vector2d(1.0, 0.0);
    return n - d->radius;
  }
  const auto& r = std::get<Rect>(o);
  const double c = std::cos(r.angle);
  const double s = std::sin(r.angle);
  const Eigen::Vector2d v = p - r.center;
  const Eigen::Vector2d pl(c * v.x() + s * v.y(), -s * v.x() + c * v.y());
  const Eigen::Vector2d q = pl.cwiseAbs() - r.half_extents;
  const Eigen::Vector2d qpos = q.cwiseMax(0.0);
  const double outside = qpos.norm();
  const double inside = std::min(std::max(q.x(), q.y()), 0.0);
  if (gradient) {
    Eigen::Vector2d gl;
    if (outside > 0.0) {
      gl = Eigen::Vector2d(std::copysign(qpos.x(), pl.x()), std::copysign(qpos.y(), pl.y())) / outside;
    } else if (q.x() > q.y()) {
      gl = Eigen::Vector2d(pl.x() >= 0.0 ? 1.0 : -1.0, 0.0);
    } else {
      gl = Eigen::Vector2d(0.0, pl.y() >= 0.0 ? 1.0 : -1.0);
    }
    *gradient = Eigen::Vector2d(c * gl.x() - s * gl.y(), s * gl.x() + c * gl.y());
  }
  return outside + inside;
}

std::string to_string(SceneKind k) {
  switch (k) {
    case SceneKind::kEmpty: return "empty";
    case SceneKind::kSimpleObstacle: return "simple_obstacle";
    case SceneKind::kForest: return "forest";
    case SceneKind::kBugTrap: return "bug_trap";
  }
  return "empty";
}

SceneKind scene_kind_from_string(const std::string& s) {
  if (s == "empty") return SceneKind::kEmpty;
  if (s == "simple_obstacle") return SceneKind::kSimpleObstacle;
  if (s == "forest") return SceneKind::kForest;
  if (s == "bug_trap") return SceneKind::kBugTrap;
  throw UsageError("unknown scene kind '" + s + "'");
}

bool Scene::in_bounds(const Eigen::Vector2d& p) const {
  return p.x() >= lower.x() && p.y() >= lower.y() && p.x() <= upper.x() && p.y() <= upper.y();
}

namespace {

Query make_query(std::string label, Eigen::Vector2d a, Eigen::Vector2d b) {
  const double heading = std::atan2(b.y() - a.y(), b.x() - a.x());
  return {std::move(label), Eigen::Vector3d(a.x(), a.y(), heading), Eigen::Vector3d(b.x(), b.y(), heading)};
}

Scene make_forest(std::uint64_t seed) {
  Scene s;
  s.kind = SceneKind::kForest;
  s.seed = seed;
  s.upper = {14.0, 14.0};
  const std::vector<std::pair<char, Eigen::Vector2d>> anchors{
      {'A', {1.0, 1.0}}, {'B', {13.0, 1.0}}, {'C', {13.0, 13.0}}, {'D', {1.0, 13.0}}};
  s.queries = {make_query("A-C", anchors[0].second, anchors[2].second),
               make_query("C-A", anchors[2].second, anchors[0].second),
               make_query("B-D", anchors[1].second, anchors[3].second),
               make_query("D-B", anchors[3].second, anchors[1].second)};

  constexpr int kDiscs = 25;
  constexpr double kCorridor = 1.2;
  constexpr double kAnchorClearance = 1.5;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius(0.3, 0.6);
  std::uniform_real_distribution<double> coord(1.0, 13.0);
  // Random sequential placement; restart from the same stream if it jams.
  while (true) {
    std::vector<Disc> discs;
    for (int attempt = 0; attempt < 200000 && static_cast<int>(discs.size()) < kDiscs; ++attempt) {
      Disc d{{coord(rng), coord(rng)}, radius(rng)};
      bool ok = true;
      for (const auto& [label, a] : anchors) {
        if ((d.center - a).norm() - d.radius < kAnchorClearance) ok = false;
      }
      for (const auto& e : discs) {
        if ((d.center - e.center).norm() - d.radius - e.radius < kCorridor) ok = false;
      }
      if (ok) discs.push_back(d);
    }
    if (static_cast<int>(discs.size()) == kDiscs) {
      for (const auto& d : discs) s.obstacles.emplace_back(d);
      return s;
    }
  }
}

}  // namespace

Scene make_scene(SceneKind kind, std::uint64_t seed) {
  switch (kind) {
    case SceneKind::kEmpty: {
      Scene s;
      s.seed = seed;
      s.queries = {make_query("S-G", {1.5, 5.0}, {8.5, 5.0})};
      return s;
    }
    case SceneKind::kSimpleObstacle: {
      Scene s;
      s.kind = kind;
      s.seed = seed;
      s.obstacles.emplace_back(Rect{{5.0, 5.0}, {1.0, 2.0}, 0.0});
      s.queries = {make_query("S-G", {1.5, 5.0}, {8.5, 5.0})};
      return s;
    }
    case SceneKind::kForest: return make_forest(seed);
    case SceneKind::kBugTrap: {
      Scene s;
      s.kind = kind;
      s.seed = seed;
      // C-shaped trap opening towards -x; the 1.4 m mouth leads down a narrow passage.
      constexpr double kWall = 0.3;
      constexpr double kMouth = 1.4;
      const double y_lo = 5.0 - kMouth / 2.0;
      const double y_hi = 5.0 + kMouth / 2.0;
      const double x0 = 4.5;
      const double x1 = 7.5;
      s.obstacles.emplace_back(Rect{{(x0 + x1 + kWall) / 2.0, y_hi + kWall / 2.0}, {(x1 + kWall - x0) / 2.0, kWall / 2.0}, 0.0});
      s.obstacles.emplace_back(Rect{{(x0 + x1 + kWall) / 2.0, y_lo - kWall / 2.0}, {(x1 + kWall - x0) / 2.0, kWall / 2.0}, 0.0});
      s.obstacles.emplace_back(Rect{{x1 + kWall / 2.0, 5.0}, {kWall / 2.0, kMouth / 2.0 + kWall}, 0.0});
      Query q{"S-G", {9.0, 5.0, std::numbers::pi / 2.0}, {6.6, 5.0, 0.0}};
      s.queries = {q};
      return s;
    }
  }
  throw UsageError("unknown scene kind");
}

Scene make_scene(const std::string& kind, std::uint64_t seed) { return make_scene(scene_kind_from_string(kind), seed); }

nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json j;
  j["kind"] = to_string(s.kind);
  j["seed"] = s.seed;
  j["bounds"] = {s.lower.x(), s.lower.y(), s.upper.x(), s.upper.y()};
  j["footprint_radius"] = s.footprint_radius;
  j["walls"] = s.walls;
  j["obstacles"] = nlohmann::json::array();
  for (const auto& o : s.obstacles) {
    if (const auto* d = std::get_if<Disc>(&o)) {
      j["obstacles"].push_back({{"type", "disc"}, {"center", {d->center.x(), d->center.y()}}, {"radius", d->radius}});
    } else {
      const auto& r = std::get<Rect>(o);
      j["obstacles"].push_back({{"type", "rect"},
                                {"center", {r.center.x(), r.center.y()}},
                                {"half_extents", {r.half_extents.x(), r.half_extents.y()}},
                                {"angle", r.angle}});
    }
  }
  j["queries"] = nlohmann::json::array();
  for (const auto& q : s.queries) {
    j["queries"].push_back({{"label", q.label},
                            {"start", {q.start.x(), q.start.y(), q.start.z()}},
                            {"goal", {q.goal.x(), q.goal.y(), q.goal.z()}}});
  }
  return j;
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.kind = scene_kind_from_string(j.at("kind").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto b = j.at("bounds").get<std::vector<double>>();
  if (b.size() != 4) throw UsageError("scene bounds need 4 numbers");
  s.lower = {b[0], b[1]};
  s.upper = {b[2], b[3]};
  s.footprint_radius = j.value("footprint_radius", 0.2);
  s.walls = j.value("walls", false);
  for (const auto& o : j.at("obstacles")) {
    const auto c = o.at("center").get<std::vector<double>>();
    if (o.at("type") == "disc") {
      s.obstacles.emplace_back(Disc{{c[0], c[1]}, o.at("radius").get<double>()});
    } else {
      const auto h = o.at("half_extents").get<std::vector<double>>();
      s.obstacles.emplace_back(Rect{{c[0], c[1]}, {h[0], h[1]}, o.value("angle", 0.0)});
    }
  }
  for (const auto& q : j.at("queries")) {
    const auto a = q.at("start").get<std::vector<double>>();
    const auto g = q.at("goal").get<std::vector<double>>();
    s.queries.push_back({q.at("label").get<std::string>(), {a[0], a[1], a[2]}, {g[0], g[1], g[2]}});
  }
  return s;
}

Clearance exact_clearance(const Scene& s, const Eigen::Vector2d& p) {
  Clearance c;
  for (std::size_t i = 0; i < s.obstacles.size(); ++i) {
    const double d = obstacle_distance(s.obstacles[i], p) - s.footprint_radius;
    if (d < c.distance) {
      c.distance = d;
      c.nearest = static_cast<int>(i);
    }
  }
  if (s.walls) {
    const double wall = std::min({p.x() - s.lower.x(), p.y() - s.lower.y(), s.upper.x() - p.x(), s.upper.y() - p.y()}) -
                        s.footprint_radius;
    if (wall < c.distance) {
      c.distance = wall;
      c.nearest = -1;
    }
  }
  return c;
}

std::vector<std::pair<int, double>> obstacles_within(const Scene& s, const Eigen::Vector2d& p, double eps) {
  std::vector<std::pair<int, double>> out;
  for (std::size_t i = 0; i < s.obstacles.size(); ++i) {
    const double d = obstacle_distance(s.obstacles[i], p) - s.footprint_radius;
    if (d <= eps) out.emplace_back(static_cast<int>(i), d);
  }
  return out;
}

bool collides(const Scene& s, const Eigen::Vector2d& p) { return exact_clearance(s, p).distance < 0.0; }

bool segment_collides(const Scene& s, const Eigen::Vector2d& a, const Eigen::Vector2d& b, double spacing) {
  const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / spacing)));
  for (int i = 0; i <= n; ++i) {
    if (collides(s, a + (b - a) * (static_cast<double>(i) / n))) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------

SdfGrid::SdfGrid(Eigen::Vector2d origin, double resolution, int nx, int ny, std::vector<double> values)
    : origin_(std::move(origin)), resolution_(resolution), nx_(nx), ny_(ny), values_(std::move(values)) {
  if (nx_ < 2 || ny_ < 2 || values_.size() != static_cast<std::size_t>(nx_) * ny_) {
    throw UsageError("SdfGrid: inconsistent dimensions");
  }
}

double SdfGrid::clearance(const Eigen::Vector2d& p, Eigen::Vector2d* gradient) const {
  const Eigen::Vector2d g = (p - origin_) / resolution_;
  if (!(g.x() >= 0.0 && g.y() >= 0.0 && g.x() <= nx_ - 1 && g.y() <= ny_ - 1)) {
    if (oob_.fetch_add(1) == 0) {
      spdlog::warn("SDF query ({:.3f}, {:.3f}) outside grid; treating clearance as +inf", p.x(), p.y());
    }
    if (gradient) gradient->setZero();
    return std::numeric_limits<double>::infinity();
  }
  const int ix = std::min(static_cast<int>(g.x()), nx_ - 2);
  const int iy = std::min(static_cast<int>(g.y()), ny_ - 2);
  const double tx = g.x() - ix;
  const double ty = g.y() - iy;
  const double v00 = at(ix, iy);
  const double v10 = at(ix + 1, iy);
  const double v01 = at(ix, iy + 1);
  const double v11 = at(ix + 1, iy + 1);
  if (gradient) {
    *gradient = Eigen::Vector2d(((1 - ty) * (v10 - v00) + ty * (v11 - v01)) / resolution_,
                                ((1 - tx) * (v01 - v00) + tx * (v11 - v10)) / resolution_);
  }
  return (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 + (1 - tx) * ty * v01 + tx * ty * v11;
}

namespace {

struct GridShape {
  Eigen::Vector2d origin;
  int nx;
  int ny;
};

GridShape grid_shape(const Scene& s, double resolution, double margin) {
  if (!(resolution > 0.0)) throw UsageError("build_sdf: resolution must be positive");
  const Eigen::Vector2d origin = s.lower - Eigen::Vector2d::Constant(margin);
  const Eigen::Vector2d extent = s.upper - s.lower + Eigen::Vector2d::Constant(2.0 * margin);
  return {origin, static_cast<int>(std::ceil(extent.x() / resolution)) + 1,
          static_cast<int>(std::ceil(extent.y() / resolution)) + 1};
}

double cell_value(const Scene& s, const Eigen::Vector2d& p) {
  const double d = exact_clearance(s, p).distance;
  // Empty scenes have no finite clearance; keep the grid finite for interpolation.
  return std::isfinite(d) ? d : 1e6;
}

}  // namespace

SdfGrid build_sdf(const Scene& s, double resolution, double margin) {
  const GridShape g = grid_shape(s, resolution, margin);
  std::vector<double> values(static_cast<std::size_t>(g.nx) * g.ny);
#pragma omp parallel for schedule(static)
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      values[static_cast<std::size_t>(iy) * g.nx + ix] =
          cell_value(s, g.origin + resolution * Eigen::Vector2d(ix, iy));
    }
  }
  return {g.origin, resolution, g.nx, g.ny, std::move(values)};
}

SdfGrid build_sdf_reference(const Scene& s, double resolution, double margin) {
  const GridShape g = grid_shape(s, resolution, margin);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(g.nx) * g.ny);
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) values.push_back(cell_value(s, g.origin + resolution * Eigen::Vector2d(ix, iy)));
  }
  return {g.origin, resolution, g.nx, g.ny, std::move(values)};
}

double SingleObstacleDistance::clearance(const Eigen::Vector2d& p, Eigen::Vector2d* gradient) const {
  return obstacle_distance(obstacle_, p, gradient) - footprint_;
}

double SceneDistance::clearance(const Eigen::Vector2d& p, Eigen::Vector2d* gradient) const {
  const Clearance c = exact_clearance(*scene_, p);
  if (gradient) {
    if (c.nearest >= 0) {
      obstacle_distance(scene_->obstacles[c.nearest], p, gradient);
    } else {
      gradient->setZero();
    }
  }
  return c.distance;
}

double GoalRegion::distance(const GroupElement& q) const {
  if (!q.same_space(center)) throw UsageError("goal region: manifold mismatch");
  const double dx = q.coeffs()[0] - center.coeffs()[0];
  const double dy = q.coeffs()[1] - center.coeffs()[1];
  double d2 = dx * dx + dy * dy;
  if (q.manifold() == Manifold::kSE2) {
    const double dth = wrap_angle(q.theta() - center.theta());
    d2 += angle_weight * angle_weight * dth * dth;
  }
  return std::sqrt(d2);
}

}  // namespace stela
