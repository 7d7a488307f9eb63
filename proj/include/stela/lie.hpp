#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace stela {

/// Thrown on contract violations by callers (bad dimensions, duplicate keys,
/// negative durations, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kMaxGroupDim = 8;

/// Small fixed-capacity vector; avoids heap traffic in the solver hot loop.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxGroupDim, 1>;

enum class Manifold { kSE2, kRn };

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// Tangent-space vector paired with the manifold it belongs to.
/// SE2 tangents are body-frame twists (vx, vy, omega).
class Tangent {
 public:
  Tangent() = default;
  Tangent(Manifold kind, const Vec& v);

  static Tangent se2(double vx, double vy, double omega);
  static Tangent rn(const Vec& v);

  Manifold manifold() const { return kind_; }
  int dim() const { return static_cast<int>(v_.size()); }
  const Vec& vector() const { return v_; }
  double operator[](int i) const { return v_[i]; }

  Tangent scaled(double s) const { return {kind_, v_ * s}; }

 private:
  Manifold kind_ = Manifold::kRn;
  Vec v_;
};

/// Element of SE(2) (x, y, theta) or R^n. Angles are wrapped on construction.
class GroupElement {
 public:
  GroupElement() = default;
  GroupElement(Manifold kind, const Vec& data);

  static GroupElement se2(double x, double y, double theta);
  static GroupElement rn(const Vec& v);
  static GroupElement scalar(double v);
  static GroupElement identity(Manifold kind, int dim);

  Manifold manifold() const { return kind_; }
  /// Manifold (tangent) dimension; equals the coordinate count for both kinds.
  int dim() const { return static_cast<int>(data_.size()); }
  const Vec& coeffs() const { return data_; }

  double x() const { return data_[0]; }
  double y() const { return data_[1]; }
  double theta() const { return data_[2]; }

  bool same_space(const GroupElement& o) const { return kind_ == o.kind_ && dim() == o.dim(); }

 private:
  Manifold kind_ = Manifold::kRn;
  Vec data_;
};

GroupElement compose(const GroupElement& a, const GroupElement& b);
GroupElement inverse(const GroupElement& a);
/// a^-1 * b
GroupElement between(const GroupElement& a, const GroupElement& b);
GroupElement exp_map(const Tangent& t);
Tangent log_map(const GroupElement& g);
/// q * Exp(qdot * dt); dt must be non-negative.
GroupElement integrate(const GroupElement& q, const Tangent& qdot, double dt);

/// Right retraction g * Exp(delta); additive for R^n.
GroupElement retract(const GroupElement& g, const Vec& delta);
/// Log(Between(a, b)): local coordinates of b around a.
Vec local(const GroupElement& a, const GroupElement& b);

/// 3x3 homogeneous matrix of an SE(2) element.
Eigen::Matrix3d to_matrix(const GroupElement& g);

std::string to_string(const GroupElement& g);

}  // namespace stela
