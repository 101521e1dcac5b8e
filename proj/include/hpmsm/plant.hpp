#pragma once

// Electromagnetic model of a surface PMSM in the static two-phase frame,
// plus the speed-rescaled ("chi") quantities the observers are built on.
// All angles and speeds are electrical.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hpmsm/circle.hpp"

namespace hpmsm {

struct MachineParams {
  double resistance = 0.06;       // R, Ohm
  double inductance = 33.75e-6;   // L, H
  double flux = 1.9e-3;           // phi, Wb
  double pole_pairs = 7.0;        // p

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string("machine.") + name + " must be positive");
      }
    };
    positive(resistance, "R");
    positive(inductance, "L");
    positive(flux, "phi");
    positive(pole_pairs, "pole_pairs");
  }

  double r_over_l() const { return resistance / inductance; }
};

/// Electrical rad/s for a mechanical speed in rpm.
inline double electrical_speed(double rpm, double pole_pairs) {
  return rpm * 2.0 * std::numbers::pi / 60.0 * pole_pairs;
}

struct PlantState {
  Vec2 current = Vec2::Zero();  // i_s, A
  UnitCircle rotor;             // zeta
};

struct PlantDerivative {
  Vec2 current;  // di_s/dt, A/s
  Vec2 rotor;    // dzeta/dt
};

/// di_s/dt = -(R/L) i_s + u_s/L - omega phi J zeta / L,  dzeta/dt = omega J zeta.
inline PlantDerivative plant_flow(const PlantState& x, const Vec2& voltage, double omega,
                                  const MachineParams& m) {
  const Vec2 jz = skew_mul(x.rotor.vec());
  PlantDerivative d;
  d.current = -m.r_over_l() * x.current + voltage / m.inductance -
              (omega * m.flux / m.inductance) * jz;
  d.rotor = omega * jz;
  return d;
}

/// C^T[zeta_r] v: static-frame vector expressed in the frame zeta_r.
inline Vec2 to_rotating_frame(const UnitCircle& frame, const Vec2& v_static) {
  return rotate(frame, v_static, Direction::inverse);
}

inline Vec2 to_static_frame(const UnitCircle& frame, const Vec2& v_rot) {
  return rotate(frame, v_rot, Direction::forward);
}

/**
 * Rotating-frame model: the current i_r = C^T[zeta_r] i_s in a frame turning
 * at omega_r obeys
 *
 *   di_r/dt = -(R/L) i_r + u_r/L - omega phi J C^T[zeta_r] zeta / L - omega_r J i_r.
 */
inline Vec2 rotating_frame_current_flow(const Vec2& i_r, const Vec2& u_r, const UnitCircle& rotor,
                                        const UnitCircle& frame, double omega, double omega_r,
                                        const MachineParams& m) {
  const Vec2 rotor_in_frame = to_rotating_frame(frame, rotor.vec());
  return -m.r_over_l() * i_r + u_r / m.inductance -
         (omega * m.flux / m.inductance) * skew_mul(rotor_in_frame) - omega_r * skew_mul(i_r);
}

inline double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

struct ChiQuantities {
  double chi;          // |omega| phi, V
  double xi;           // sgn(omega) / phi, 1/Wb
  UnitCircle frame;    // zeta_chi = zeta sgn(omega)
  double chi_rate;     // D+chi = sgn(omega) D+omega phi, V/s
};

inline ChiQuantities chi_quantities(double omega, double omega_rate, const UnitCircle& rotor,
                                    const MachineParams& m) {
  if (!(omega != 0.0) || !std::isfinite(omega)) {
    throw std::invalid_argument("chi_quantities: speed must be non-zero");
  }
  const double sg = sign_of(omega);
  return {std::abs(omega) * m.flux, sg / m.flux, sg > 0.0 ? rotor : -rotor,
          sg * omega_rate * m.flux};
}

/// Bounds on chi implied by speed bounds.
struct ChiBounds {
  double chi_min;   // V
  double chi_max;   // V
  double rate_max;  // V/s
};

inline ChiBounds chi_bounds(double omega_min, double omega_max, double accel_max,
                            const MachineParams& m) {
  return {omega_min * m.flux, omega_max * m.flux, accel_max * m.flux};
}

}  // namespace hpmsm
