#pragma once

#include "stela/models.hpp"
#include "stela/world.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stela {

struct TrajectoryEdge {
  Vec u;
  double dt = 0.0;
};

/// Planner output: node states x_0..x_T and the (u, dt) edges between them.
/// Edge i is a single model step from node i to node i+1.
struct DesiredTrajectory {
  std::string model_id;
  std::string scene_id;
  std::vector<State> nodes;
  std::vector<TrajectoryEdge> edges;

  double duration() const;
  int num_edges() const { return static_cast<int>(edges.size()); }
};

nlohmann::json trajectory_to_json(const DesiredTrajectory& t);
DesiredTrajectory trajectory_from_json(const nlohmann::json& j);

/// Largest deviation between node i+1 and step(model, node i, edge i).
double rollout_error(const DynamicsModel& model, const DesiredTrajectory& t);

/// Replaces every edge longer than `threshold` by ceil(dt / threshold) equal
/// sub-edges and regenerates all states forward from x_0.
DesiredTrajectory split_edges(const DynamicsModel& model, const DesiredTrajectory& t, double threshold);

/// Weighted state distance: position 1, heading 0.3, velocity 0.1.
double state_distance(const State& a, const State& b);

struct TreeNode {
  State x;
  int parent = -1;
  Vec u;
  double duration = 0.0;
  int substeps = 0;
  double cost = 0.0;  // accumulated duration from the root
};

/// Tree with a uniform position grid for exact nearest-neighbor queries.
class MotionTree {
 public:
  MotionTree(Eigen::Vector2d lower, Eigen::Vector2d upper, double cell = 0.5);

  int add(TreeNode n);
  const TreeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(nodes_.size()); }
  /// Lowest-id node minimizing state_distance.
  int nearest(const State& x) const;
  /// Linear scan with the same contract as nearest().
  int nearest_brute_force(const State& x) const;

 private:
  int cell_of(int ix, int iy) const { return iy * nx_ + ix; }
  std::pair<int, int> cell_coords(const Eigen::Vector2d& p) const;

  std::vector<TreeNode> nodes_;
  Eigen::Vector2d lower_;
  double cell_;
  int nx_;
  int ny_;
  std::vector<std::vector<int>> buckets_;
};

struct PlannerConfig {
  int max_iterations = 30000;
  double min_duration = 0.05;
  double max_duration = 1.0;
  double goal_bias = 0.05;
  // Random (u, duration) candidates per iteration; the one ending closest to the sample is kept.
  int control_samples = 4;
  double check_spacing = 0.02;
  // Required clearance beyond the footprint along the whole plan: the obstacle
  // factor activation distance (0.3) plus the worst SDF underestimate at 0.05 m
  // resolution, so that a noiseless plan leaves every obstacle factor inactive.
  double clearance_margin = 0.33;
  // Plans must end this deep inside the goal region used for execution.
  double goal_radius = 0.3;
};

struct PlanResult {
  bool success = false;
  DesiredTrajectory trajectory;
  int iterations = 0;
  int tree_size = 0;
  double cost = 0.0;
};

/// Start state at rest at `start` (x, y, heading); heading ignored for R^2 models.
State rest_state(const DynamicsModel& model, const Eigen::Vector3d& pose);
GroupElement pose_element(const DynamicsModel& model, const Eigen::Vector3d& pose);

/// Monte-Carlo propagation tree with duration-bound pruning.
/// Throws UsageError when the start is in collision.
PlanResult plan(const DynamicsModel& model, const Scene& scene, const Eigen::Vector3d& start,
                const Eigen::Vector3d& goal, std::uint64_t seed, const PlannerConfig& config = {});

/// True when the continuous motion of the trajectory touches an obstacle or
/// comes closer than `margin`, checked at `spacing`.
bool trajectory_collides(const Scene& scene, const DesiredTrajectory& t, double spacing = 0.01, double margin = 0.0);

/// Discretized straight line from start to goal at half the model's top speed,
/// zero controls, heading fixed towards the goal.
DesiredTrajectory straight_line_trajectory(const DynamicsModel& model, const Eigen::Vector3d& start,
                                           const Eigen::Vector3d& goal);

}  // namespace stela
