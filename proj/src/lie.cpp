#include "stela/lie.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace stela {
namespace {

constexpr double kSmallAngle = 1e-6;

void require_same(const GroupElement& a, const GroupElement& b, const char* what) {
  if (!a.same_space(b)) {
    throw UsageError(std::string(what) + ": manifold mismatch");
  }
}

void check_dim(Manifold kind, int n) {
  if (kind == Manifold::kSE2 && n != 3) throw UsageError("SE2 elements have 3 coordinates");
  if (n < 1 || n > kMaxGroupDim) throw UsageError("R^n dimension out of range");
}

}  // namespace

double wrap_angle(double theta) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::fmod(theta + std::numbers::pi, kTwoPi);
  if (r <= 0.0) r += kTwoPi;
  return r - std::numbers::pi;
}

Tangent::Tangent(Manifold kind, const Vec& v) : kind_(kind), v_(v) { check_dim(kind, static_cast<int>(v.size())); }

Tangent Tangent::se2(double vx, double vy, double omega) {
  Vec v(3);
  v << vx, vy, omega;
  return {Manifold::kSE2, v};
}

Tangent Tangent::rn(const Vec& v) { return {Manifold::kRn, v}; }

GroupElement::GroupElement(Manifold kind, const Vec& data) : kind_(kind), data_(data) {
  check_dim(kind, static_cast<int>(data.size()));
  if (kind_ == Manifold::kSE2) data_[2] = wrap_angle(data_[2]);
}

GroupElement GroupElement::se2(double x, double y, double theta) {
  Vec v(3);
  v << x, y, theta;
  return {Manifold::kSE2, v};
}

GroupElement GroupElement::rn(const Vec& v) { return {Manifold::kRn, v}; }

GroupElement GroupElement::scalar(double v) {
  Vec d(1);
  d << v;
  return {Manifold::kRn, d};
}

GroupElement GroupElement::identity(Manifold kind, int dim) { return {kind, Vec::Zero(dim)}; }

GroupElement compose(const GroupElement& a, const GroupElement& b) {
  require_same(a, b, "compose");
  if (a.manifold() == Manifold::kRn) return GroupElement::rn(a.coeffs() + b.coeffs());
  const double c = std::cos(a.theta());
  const double s = std::sin(a.theta());
  return GroupElement::se2(a.x() + c * b.x() - s * b.y(), a.y() + s * b.x() + c * b.y(),
                           a.theta() + b.theta());
}

GroupElement inverse(const GroupElement& a) {
  if (a.manifold() == Manifold::kRn) return GroupElement::rn(-a.coeffs());
  const double c = std::cos(a.theta());
  const double s = std::sin(a.theta());
  return GroupElement::se2(-c * a.x() - s * a.y(), s * a.x() - c * a.y(), -a.theta());
}

GroupElement between(const GroupElement& a, const GroupElement& b) {
  require_same(a, b, "between");
  if (a.manifold() == Manifold::kRn) return GroupElement::rn(b.coeffs() - a.coeffs());
  // R(-ta) * (pb - pa), tb - ta
  const double c = std::cos(a.theta());
  const double s = std::sin(a.theta());
  const double dx = b.x() - a.x();
  const double dy = b.y() - a.y();
  return GroupElement::se2(c * dx + s * dy, -s * dx + c * dy, b.theta() - a.theta());
}

GroupElement exp_map(const Tangent& t) {
  if (t.manifold() == Manifold::kRn) return GroupElement::rn(t.vector());
  const double vx = t[0];
  const double vy = t[1];
  const double th = t[2];
  double a;  // sin(th)/th
  double b;  // (1-cos(th))/th
  if (std::abs(th) < kSmallAngle) {
    a = 1.0 - th * th / 6.0;
    b = th / 2.0 - th * th * th / 24.0;
  } else {
    a = std::sin(th) / th;
    const double sh = std::sin(0.5 * th);
    b = 2.0 * sh * sh / th;
  }
  return GroupElement::se2(a * vx - b * vy, b * vx + a * vy, th);
}

Tangent log_map(const GroupElement& g) {
  if (g.manifold() == Manifold::kRn) return Tangent::rn(g.coeffs());
  const double th = g.theta();
  // V^-1 = (th/2) [[cot(th/2), 1], [-1, cot(th/2)]]
  double half_cot;  // (th/2) * cot(th/2)
  if (std::abs(th) < kSmallAngle) {
    half_cot = 1.0 - th * th / 12.0;
  } else {
    half_cot = 0.5 * th / std::tan(0.5 * th);
  }
  const double hx = 0.5 * th;
  return Tangent::se2(half_cot * g.x() + hx * g.y(), -hx * g.x() + half_cot * g.y(), th);
}

GroupElement integrate(const GroupElement& q, const Tangent& qdot, double dt) {
  if (dt < 0.0) throw UsageError("integrate: negative dt");
  if (qdot.manifold() != q.manifold() || qdot.dim() != q.dim()) {
    throw UsageError("integrate: tangent does not match group");
  }
  return compose(q, exp_map(qdot.scaled(dt)));
}

GroupElement retract(const GroupElement& g, const Vec& delta) {
  if (g.manifold() == Manifold::kRn) return GroupElement::rn(g.coeffs() + delta);
  return compose(g, exp_map(Tangent(Manifold::kSE2, delta)));
}

Vec local(const GroupElement& a, const GroupElement& b) { return log_map(between(a, b)).vector(); }

Eigen::Matrix3d to_matrix(const GroupElement& g) {
  if (g.manifold() != Manifold::kSE2) throw UsageError("to_matrix: SE2 only");
  const double c = std::cos(g.theta());
  const double s = std::sin(g.theta());
  Eigen::Matrix3d m;
  m << c, -s, g.x(), s, c, g.y(), 0, 0, 1;
  return m;
}

std::string to_string(const GroupElement& g) {
  std::ostringstream os;
  os << (g.manifold() == Manifold::kSE2 ? "SE2(" : "R(");
  for (int i = 0; i < g.dim(); ++i) os << (i ? ", " : "") << g.coeffs()[i];
  os << ")";
  return os.str();
}

}  // namespace stela
