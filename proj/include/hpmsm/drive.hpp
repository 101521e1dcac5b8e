#pragma once

// Minimal sensorized current loop used only to excite the plant: a PI
// regulator on the current error expressed in the true rotor frame, plus a
// model feedforward (resistive drop, rotation of the reference and
// back-EMF). The observers never see its state.

#include <cmath>
#include <stdexcept>

#include "hpmsm/circle.hpp"
#include "hpmsm/plant.hpp"

namespace hpmsm {

struct CurrentLoopGains {
  double kp;         // V/A
  double ki;         // V/(A s)
  double v_limit;    // |u_s| bound (DC-bus limited), V

  /**
   * With the feedforward the error obeys L e' = -(R + kp) e - ki z - omega L J e,
   * whose skew part does not change |e|. kp = L bw - R puts the error decay
   * at bw; the integrator is kept slow (ki / (L bw^2) = 0.005) so that it
   * only removes model mismatch and adds a tail below 1% of a step.
   */
  static CurrentLoopGains from_bandwidth(double bandwidth, const MachineParams& m,
                                         double v_limit) {
    if (!(bandwidth > m.r_over_l())) {
      throw std::invalid_argument("current loop bandwidth must exceed R/L");
    }
    return {m.inductance * bandwidth - m.resistance,
            kIntegralRatio * m.inductance * bandwidth * bandwidth, v_limit};
  }

  static constexpr double kIntegralRatio = 0.005;

  /// 1 / bandwidth of the design above.
  double time_constant(const MachineParams& m) const { return m.inductance / (kp + m.resistance); }
};

struct DriveOutput {
  Vec2 voltage;        // u_s, static frame, V
  Vec2 integral_rate;  // derivative of the rotor-frame error integral, A
  bool saturated;
};

/**
 * u_s = C[zeta] (kp e + ki z) + R i_ref + omega L J i_ref + omega phi J zeta,
 * clamped to |u_s| <= v_limit, where e = C^T[zeta](i_ref - i_s) and z
 * integrates e. The omega L J i_ref term is L di_ref/dt for a reference
 * fixed in the rotor frame. Integration stops while the output is clamped.
 */
inline DriveOutput drive_voltage(const Vec2& current, const Vec2& current_ref,
                                 const UnitCircle& rotor, double omega, const Vec2& integral,
                                 const MachineParams& m, const CurrentLoopGains& g) {
  const Vec2 err = to_rotating_frame(rotor, current_ref - current);
  const Vec2 pi_out = to_static_frame(rotor, g.kp * err + g.ki * integral);
  Vec2 u = pi_out + m.resistance * current_ref + omega * m.inductance * skew_mul(current_ref) +
           omega * m.flux * skew_mul(rotor.vec());
  const double mag = u.norm();
  DriveOutput out{u, err, false};
  if (mag > g.v_limit) {
    out.voltage = u * (g.v_limit / mag);
    out.integral_rate = Vec2::Zero();
    out.saturated = true;
  }
  return out;
}

}  // namespace hpmsm
