#pragma once

// Reduced-order attitude/flux error dynamics on the cylinder S1 x R, obtained
// by assuming exact current and back-EMF knowledge, and its clock-driven
// hybrid version. State layout: (eta_1, eta_2, xi_err, rho).

#include <functional>
#include <utility>

#include "hpmsm/circle.hpp"
#include "hpmsm/hybrid_sim.hpp"
#include "hpmsm/observer.hpp"

namespace hpmsm {

struct ReducedDerivative {
  Vec2 eta;
  double xi_err;
};

/// eta' = (chi xi_err - k_eta chi eta_2) J eta,  xi_err' = -gamma chi eta_2.
inline ReducedDerivative reduced_flow(const UnitCircle& eta, double xi_err, double chi,
                                      const ObserverGains& g) {
  const double w = chi * xi_err - g.k_eta * chi * eta.s();
  return {w * skew_mul(eta.vec()), -g.gamma * chi * eta.s()};
}

/// Jump of the reduced system: eta+ = -F eta = (-eta_1, eta_2) when
/// eta_1 <= 0, else unchanged. Both branches agree at eta_1 = 0.
inline UnitCircle reduced_jump(const UnitCircle& eta) {
  if (eta.c() <= 0.0) return UnitCircle(-eta.c(), eta.s());
  return eta;
}

/**
 * H0: the reduced flow plus a clock, with jumps at rho = 1. With
 * `hybrid = false` the clock is frozen and the system never jumps, which
 * gives the continuous-time reduced dynamics.
 */
class ReducedSystem {
 public:
  using State = Vec4;
  using ChiSignal = std::function<double(double)>;

  ReducedSystem(ObserverGains gains, ChiSignal chi, bool hybrid = true)
      : gains_(gains), chi_(std::move(chi)), hybrid_(hybrid) {}

  ReducedSystem(ObserverGains gains, double chi, bool hybrid = true)
      : ReducedSystem(gains, [chi](double) { return chi; }, hybrid) {}

  static State make_state(const UnitCircle& eta, double xi_err, double rho = 0.0) {
    return {eta.c(), eta.s(), xi_err, rho};
  }
  static UnitCircle eta_of(const State& x) { return {x[0], x[1]}; }

  State flow(double t, const State& x) const {
    const auto d = reduced_flow(eta_of(x), x[2], chi_(t), gains_);
    return {d.eta.x(), d.eta.y(), d.xi_err, hybrid_ ? gains_.clock_rate : 0.0};
  }

  State jump(double, const State& x) const {
    const UnitCircle eta = reduced_jump(eta_of(x));
    return {eta.c(), eta.s(), x[2], 0.0};
  }

  bool in_jump_set(double, const State& x) const { return hybrid_ && Clock::expired(x[3]); }

  void project(State& x) const {
    const double n = std::hypot(x[0], x[1]);
    x[0] /= n;
    x[1] /= n;
  }

  void snap_to_jump_set(State& x) const { x[3] = 1.0; }

  double chi(double t) const { return chi_(t); }
  const ObserverGains& gains() const { return gains_; }
  bool hybrid() const { return hybrid_; }

 private:
  ObserverGains gains_;
  ChiSignal chi_;
  bool hybrid_;
};

}  // namespace hpmsm
