#pragma once

#include <cmath>
#include <numbers>

#include "hpmsm/cosim.hpp"
#include "hpmsm/drive.hpp"

namespace hpmsm::fixtures {

inline double nominal_speed() { return electrical_speed(6000.0, 7.0); }

/// Tabulated machine and gains at constant nominal speed, 5 A q-axis current.
inline CoSimConfig table_config(Variant v = Variant::hybrid) {
  CoSimConfig cfg;
  const double w = nominal_speed();
  cfg.profile = SpeedProfile::constant(w, default_speed_bounds(w));
  cfg.loop = CurrentLoopGains::from_bandwidth(2.0 * std::numbers::pi * 1000.0, cfg.machine,
                                              24.0 / std::sqrt(3.0));
  cfg.current_ref_dq = Vec2(0.0, 5.0);
  cfg.variant = v;
  return cfg;
}

/// chi = 1, k_eta = 1.5, gamma = 1.
inline ObserverGains phase_plane_gains(double clock_rate = 1.0) {
  ObserverGains g;
  g.k_eta = 1.5;
  g.gamma = 1.0;
  g.clock_rate = clock_rate;
  return g;
}

}  // namespace hpmsm::fixtures
