#pragma once

/**
 * \file circle.hpp
 *
 * Arithmetic on the unit circle S1, used to represent every reference frame
 * in the machine model and in the observers.
 *
 * A point zeta = (c, s) is associated with the rotation matrix
 *
 *     C[zeta] = | c  -s |
 *               | s   c |
 *
 * and the group product is zeta1 . zeta2 = C[zeta1] zeta2. The skew matrix
 * J = [[0, -1], [1, 0]] generates the flow of the integrator on S1,
 * d/dt zeta = u(t) J zeta.
 */

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace hpmsm {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// J v = (-v2, v1).
inline Vec2 skew_mul(const Vec2& v) { return {-v.y(), v.x()}; }

/// The matrix J itself.
inline Mat2 skew_matrix() {
  Mat2 j;
  j << 0.0, -1.0, 1.0, 0.0;
  return j;
}

/**
 * A point of S1 stored as (cos, sin).
 *
 * Construction from raw components normalizes; use from_angle() when an
 * angle is available. The identity element is (1, 0).
 */
class UnitCircle {
 public:
  UnitCircle() = default;

  UnitCircle(double c, double s) : v_(c, s) { normalize(); }

  explicit UnitCircle(const Vec2& v) : v_(v) { normalize(); }

  static UnitCircle identity() { return {}; }

  static UnitCircle from_angle(double theta) {
    if (!std::isfinite(theta)) {
      throw std::invalid_argument("UnitCircle::from_angle: angle must be finite");
    }
    UnitCircle z;
    z.v_ = Vec2(std::cos(theta), std::sin(theta));
    return z;
  }

  double c() const { return v_.x(); }
  double s() const { return v_.y(); }
  const Vec2& vec() const { return v_; }

  /// Angle in (-pi, pi].
  double angle() const { return std::atan2(v_.y(), v_.x()); }

  /// C[zeta]
  Mat2 matrix() const {
    Mat2 m;
    m << v_.x(), -v_.y(), v_.y(), v_.x();
    return m;
  }

  /// Group inverse (conjugate): C^T[zeta] corresponds to C[inverse()].
  UnitCircle inverse() const {
    UnitCircle z;
    z.v_ = Vec2(v_.x(), -v_.y());
    return z;
  }

  UnitCircle operator-() const {
    UnitCircle z;
    z.v_ = -v_;
    return z;
  }

  /// Deviation of the stored norm from one, before any renormalization.
  double norm_defect() const { return std::abs(v_.norm() - 1.0); }

 private:
  void normalize() {
    const double n = v_.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw std::invalid_argument("UnitCircle: components must be finite and not both zero");
    }
    v_ /= n;
  }

  Vec2 v_{1.0, 0.0};
};

/// zeta1 . zeta2 = C[zeta1] zeta2, renormalized.
inline UnitCircle group_mul(const UnitCircle& a, const UnitCircle& b) {
  return UnitCircle(a.c() * b.c() - a.s() * b.s(), a.s() * b.c() + a.c() * b.s());
}

inline UnitCircle operator*(const UnitCircle& a, const UnitCircle& b) { return group_mul(a, b); }

enum class Direction { forward, inverse };

/// C[zeta] v (forward) or C^T[zeta] v (inverse).
inline Vec2 rotate(const UnitCircle& z, const Vec2& v, Direction dir = Direction::forward) {
  const double s = dir == Direction::forward ? z.s() : -z.s();
  return {z.c() * v.x() - s * v.y(), s * v.x() + z.c() * v.y()};
}

/**
 * Single-valued selection of the set-valued atan2 used by the jump map.
 *
 * On the negative x-axis both -pi and pi are admissible; +pi is returned.
 * At the origin any angle is admissible; 0 is returned. Elsewhere this is
 * std::atan2. Signed zeros are not allowed to change the result.
 */
inline double atan2_select(double y, double x) {
  if (y == 0.0) {
    if (x < 0.0) return std::numbers::pi;
    return 0.0;
  }
  return std::atan2(y, x);
}

/// Wraps an angle to [-pi, pi).
inline double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  return w - std::numbers::pi;
}

}  // namespace hpmsm
