#pragma once

#include "stela/lie.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace stela {

struct Disc {
  Eigen::Vector2d center;
  double radius = 0.0;
};

/// Rectangle rotated by `angle` about its center.
struct Rect {
  Eigen::Vector2d center;
  Eigen::Vector2d half_extents;
  double angle = 0.0;
};

using Obstacle = std::variant<Disc, Rect>;

/// Signed distance from p to the obstacle boundary (negative inside).
double obstacle_distance(const Obstacle& o, const Eigen::Vector2d& p, Eigen::Vector2d* gradient = nullptr);

enum class SceneKind { kEmpty, kSimpleObstacle, kForest, kBugTrap };

std::string to_string(SceneKind k);
SceneKind scene_kind_from_string(const std::string& s);

/// A labelled start/goal pair; poses are (x, y, heading).
struct Query {
  std::string label;
  Eigen::Vector3d start;
  Eigen::Vector3d goal;
};

struct Scene {
  SceneKind kind = SceneKind::kEmpty;
  std::uint64_t seed = 0;
  Eigen::Vector2d lower{0.0, 0.0};
  Eigen::Vector2d upper{10.0, 10.0};
  std::vector<Obstacle> obstacles;
  double footprint_radius = 0.2;
  bool walls = false;
  std::vector<Query> queries;

  bool in_bounds(const Eigen::Vector2d& p) const;
};

Scene make_scene(SceneKind kind, std::uint64_t seed);
Scene make_scene(const std::string& kind, std::uint64_t seed);

nlohmann::json scene_to_json(const Scene& s);
Scene scene_from_json(const nlohmann::json& j);

struct Clearance {
  double distance = std::numeric_limits<double>::infinity();  // obstacle distance minus footprint
  int nearest = -1;
};

/// Exact clearance over all obstacles (and the workspace boundary when walls are on).
Clearance exact_clearance(const Scene& s, const Eigen::Vector2d& p);
/// Obstacles whose clearance at p is <= eps, sorted by id: (id, clearance).
std::vector<std::pair<int, double>> obstacles_within(const Scene& s, const Eigen::Vector2d& p, double eps);
bool collides(const Scene& s, const Eigen::Vector2d& p);
/// True when the segment a-b passes through any inflated obstacle (sampled at `spacing`).
bool segment_collides(const Scene& s, const Eigen::Vector2d& a, const Eigen::Vector2d& b, double spacing = 0.01);

inline Eigen::Vector2d position_of(const GroupElement& q) { return {q.coeffs()[0], q.coeffs()[1]}; }

/// Clearance query used by obstacle factors. Returns +inf where undefined.
class DistanceOracle {
 public:
  virtual ~DistanceOracle() = default;
  virtual double clearance(const Eigen::Vector2d& p, Eigen::Vector2d* gradient = nullptr) const = 0;
};

using DistanceOraclePtr = std::shared_ptr<const DistanceOracle>;

/// Node-based grid of clearance values, bilinearly interpolated.
class SdfGrid final : public DistanceOracle {
 public:
  SdfGrid(Eigen::Vector2d origin, double resolution, int nx, int ny, std::vector<double> values);
  SdfGrid(const SdfGrid& o)
      : origin_(o.origin_), resolution_(o.resolution_), nx_(o.nx_), ny_(o.ny_), values_(o.values_), oob_(o.oob_.load()) {}
  SdfGrid& operator=(const SdfGrid&) = delete;

  double clearance(const Eigen::Vector2d& p, Eigen::Vector2d* gradient = nullptr) const override;

  double at(int ix, int iy) const { return values_[static_cast<std::size_t>(iy) * nx_ + ix]; }
  Eigen::Vector2d node(int ix, int iy) const { return origin_ + resolution_ * Eigen::Vector2d(ix, iy); }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double resolution() const { return resolution_; }
  const std::vector<double>& values() const { return values_; }
  std::uint64_t out_of_bounds_queries() const { return oob_.load(); }

 private:
  Eigen::Vector2d origin_;
  double resolution_;
  int nx_;
  int ny_;
  std::vector<double> values_;
  mutable std::atomic<std::uint64_t> oob_{0};
};

/// Grid spans the scene bounds plus `margin` on every side.
SdfGrid build_sdf(const Scene& s, double resolution = 0.05, double margin = 1.0);
/// Single-threaded reference for build_sdf.
SdfGrid build_sdf_reference(const Scene& s, double resolution = 0.05, double margin = 1.0);

/// Exact clearance to one obstacle (the per-obstacle factor variant).
class SingleObstacleDistance final : public DistanceOracle {
 public:
  SingleObstacleDistance(Obstacle o, double footprint) : obstacle_(std::move(o)), footprint_(footprint) {}
  double clearance(const Eigen::Vector2d& p, Eigen::Vector2d* gradient = nullptr) const override;

 private:
  Obstacle obstacle_;
  double footprint_;
};

/// Exact clearance over the whole scene.
class SceneDistance final : public DistanceOracle {
 public:
  explicit SceneDistance(std::shared_ptr<const Scene> s) : scene_(std::move(s)) {}
  double clearance(const Eigen::Vector2d& p, Eigen::Vector2d* gradient = nullptr) const override;

 private:
  std::shared_ptr<const Scene> scene_;
};

/// Ball around q_goal under the weighted distance (1, 1, angle_weight).
struct GoalRegion {
  GroupElement center;
  double radius = 0.5;
  double angle_weight = 0.3;

  double distance(const GroupElement& q) const;
  bool contains(const GroupElement& q) const { return distance(q) < radius; }
};

}  // namespace stela
