#pragma once

/**
 * \file observer.hpp
 *
 * Sensorless position/speed/flux observer working in the estimated
 * chi-frame zeta_hat (all electrical quantities below are expressed in that
 * frame unless stated otherwise):
 *
 *   i_hat'    = -(R/L) i_hat + u/L + h_hat/L - w J i + kp (i - i_hat)
 *   h_hat'    = ki (i - i_hat)
 *   zeta_hat' = w J zeta_hat
 *   xi_hat'   = gamma h_hat_1
 *
 * with w = |h_hat| xi_hat + k_eta h_hat_1 and i, u the measured current and
 * voltage rotated into the frame zeta_hat. The hybrid variant adds a clock
 * rho' = Lambda and, at rho = 1, rotates the estimate frame so that the
 * misalignment gets a non-negative first component (jump_zeta/jump_frame).
 */

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "hpmsm/circle.hpp"
#include "hpmsm/plant.hpp"

namespace hpmsm {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

struct ObserverGains {
  double kp = 2.18e4;     // 1/s
  double ki = 9.34e3;     // V/(A s)
  double k_eta = 95.7;    // 1/V
  double gamma = 4582.0;  // 1/(V s Wb)
  double clock_rate = 200.0;  // Lambda, 1/s

  /// epsilon = 2 / (kp + R/L), the fast time scale.
  double epsilon(const MachineParams& m) const { return 2.0 / (kp + m.r_over_l()); }

  /// ki implied by epsilon: 2 L / epsilon^2.
  double ki_from_epsilon(const MachineParams& m) const {
    const double e = epsilon(m);
    return 2.0 * m.inductance / (e * e);
  }

  /// Copy with kp, ki rescaled so that the fast time scale equals eps.
  ObserverGains with_epsilon(double eps, const MachineParams& m) const {
    if (!(eps > 0.0)) throw std::invalid_argument("epsilon must be positive");
    ObserverGains g = *this;
    g.kp = 2.0 / eps - m.r_over_l();
    g.ki = 2.0 * m.inductance / (eps * eps);
    if (!(g.kp > 0.0)) throw std::invalid_argument("epsilon too large: kp would be non-positive");
    return g;
  }

  void validate() const {
    if (!(kp > 0.0) || !(ki > 0.0) || !(k_eta > 0.0) || !(gamma > 0.0) || !(clock_rate > 0.0)) {
      throw std::invalid_argument("observer gains must all be positive");
    }
  }
};

struct ObserverState {
  Vec2 i_hat = Vec2::Zero();  // A
  Vec2 h_hat = Vec2::Zero();  // V
  UnitCircle frame;           // zeta_hat_chi
  double xi_hat = 0.0;        // 1/Wb
  double rho = 0.0;           // clock
};

struct ObserverDerivative {
  Vec2 i_hat;
  Vec2 h_hat;
  Vec2 frame;
  double xi_hat;
};

/// Angular speed of the estimate frame, |h_hat| xi_hat + k_eta h_hat_1.
inline double frame_speed(const ObserverState& x, const ObserverGains& g) {
  return x.h_hat.norm() * x.xi_hat + g.k_eta * x.h_hat.x();
}

/// Flow of the continuous-time observer. `current` and `voltage` are the
/// measurements already rotated into the frame x.frame.
inline ObserverDerivative ct_observer_flow(const ObserverState& x, const Vec2& current,
                                           const Vec2& voltage, const MachineParams& m,
                                           const ObserverGains& g) {
  const double w = frame_speed(x, g);
  const Vec2 i_err = current - x.i_hat;
  ObserverDerivative d;
  d.i_hat = -m.r_over_l() * x.i_hat + voltage / m.inductance + x.h_hat / m.inductance -
            w * skew_mul(current) + g.kp * i_err;
  d.h_hat = g.ki * i_err;
  d.frame = w * skew_mul(x.frame.vec());
  d.xi_hat = g.gamma * x.h_hat.x();
  return d;
}

struct PhysicalEstimates {
  double omega;      // rad/s
  UnitCircle rotor;  // zeta_hat
  double flux;       // Wb
};

struct FluxSaturation {
  double lo;
  double hi;

  static FluxSaturation around(double nominal_flux) {
    return {0.5 * nominal_flux, 2.0 * nominal_flux};
  }
};

/**
 * omega_hat = |h_hat| xi_hat (optionally + k_eta h_hat_1), zeta_hat =
 * zeta_hat_chi sgn(xi_hat) with sgn(0) = +1, and phi_hat = 1/|xi_hat|
 * clamped to the saturation band (the upper bound when xi_hat = 0).
 */
inline PhysicalEstimates physical_estimates(const ObserverState& x, FluxSaturation sat,
                                            const ObserverGains& g, bool include_k_eta = false) {
  if (!(sat.lo > 0.0) || !(sat.hi > sat.lo)) {
    throw std::invalid_argument("flux saturation bounds must satisfy 0 < lo < hi");
  }
  PhysicalEstimates e;
  e.omega = x.h_hat.norm() * x.xi_hat + (include_k_eta ? g.k_eta * x.h_hat.x() : 0.0);
  e.rotor = x.xi_hat < 0.0 ? -x.frame : x.frame;
  const double axi = std::abs(x.xi_hat);
  e.flux = axi > 0.0 ? std::clamp(1.0 / axi, sat.lo, sat.hi) : sat.hi;
  return e;
}

/**
 * Jump of the estimate frame. When h_hat_2 >= 0 (misalignment with
 * non-positive first component), the frame is moved to
 * -C^T[zeta_hat] (cos 2 theta, sin 2 theta) where theta is the angle of
 * C[zeta_hat] J h_hat, a scaled fast estimate of the chi-frame. Otherwise,
 * and when h_hat = 0, the frame is kept.
 */
inline UnitCircle jump_zeta(const Vec2& h_hat, const UnitCircle& frame) {
  if (h_hat.y() < 0.0) return frame;
  if (h_hat.x() == 0.0 && h_hat.y() == 0.0) return frame;
  const Vec2 p = rotate(frame, skew_mul(h_hat));
  const double theta = atan2_select(p.y(), p.x());
  const Vec2 doubled(std::cos(2.0 * theta), std::sin(2.0 * theta));
  return UnitCircle(-rotate(frame, doubled, Direction::inverse));
}

/// G_f = C^T[jump_zeta(h_hat, frame)] C[frame]: old-frame to new-frame rotation.
inline Mat2 jump_frame(const Vec2& h_hat, const UnitCircle& frame) {
  const UnitCircle next = jump_zeta(h_hat, frame);
  return group_mul(next.inverse(), frame).matrix();
}

/// T: (i_err, h_err) -> x_f.
inline Mat4 fast_coordinates(double epsilon, double inductance) {
  Mat4 t = Mat4::Zero();
  t.block<2, 2>(0, 0) = Mat2::Identity() / epsilon;
  t.block<2, 2>(2, 0) = -Mat2::Identity() / epsilon;
  t.block<2, 2>(2, 2) = Mat2::Identity() / inductance;
  return t;
}

/// A_f, with x_f' = A_f x_f / epsilon + B_f dh/dt.
inline Mat4 fast_flow_matrix() {
  Mat4 a;
  a << -1, 0, 1, 0,
        0, -1, 0, 1,
       -1, 0, -1, 0,
        0, -1, 0, -1;
  return a;
}

inline Eigen::Matrix<double, 4, 2> fast_input_matrix(double inductance) {
  Eigen::Matrix<double, 4, 2> b = Eigen::Matrix<double, 4, 2>::Zero();
  b.block<2, 2>(2, 0) = Mat2::Identity() / inductance;
  return b;
}

struct ErrorState {
  UnitCircle eta;    // C^T[zeta_hat] zeta_chi
  double xi_err;     // xi - xi_hat
  Vec2 i_err;        // i - i_hat
  Vec2 h_err;        // h - h_hat
  Vec2 h;            // -chi J eta
  Vec4 x_fast;       // T (i_err, h_err)
};

/**
 * Error coordinates from the plant side (current in the estimate frame,
 * chi, the true chi-frame and xi) and the observer state.
 */
inline ErrorState error_coords(const Vec2& current_in_frame, double chi,
                               const UnitCircle& chi_frame, double xi, const ObserverState& x,
                               const MachineParams& m, const ObserverGains& g) {
  ErrorState e;
  e.eta = group_mul(x.frame.inverse(), chi_frame);
  e.xi_err = xi - x.xi_hat;
  e.i_err = current_in_frame - x.i_hat;
  e.h = -chi * skew_mul(e.eta.vec());
  e.h_err = e.h - x.h_hat;
  Vec4 raw;
  raw << e.i_err, e.h_err;
  e.x_fast = fast_coordinates(g.epsilon(m), m.inductance) * raw;
  return e;
}

}  // namespace hpmsm
