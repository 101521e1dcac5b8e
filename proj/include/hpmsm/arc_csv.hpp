#pragma once

// CSV output for hybrid arcs. One row per stored sample with columns
// t, j, event, <components>; event is "flow", or "pre"/"post" for the two
// rows that bracket each jump (same t, consecutive j).

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "hpmsm/cosim.hpp"
#include "hpmsm/hybrid_sim.hpp"
#include "hpmsm/matrosov.hpp"
#include "hpmsm/reduced.hpp"

namespace hpmsm {

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os, int precision = 12) : os_(os) {
    os_ << std::setprecision(precision);
  }

  /// '#'-prefixed lines written before the header.
  void comment(const std::string& line) { os_ << "# " << line << '\n'; }

  void header(const std::vector<std::string>& names) {
    for (std::size_t k = 0; k < names.size(); ++k) os_ << (k ? "," : "") << names[k];
    os_ << '\n';
  }

  template <class... Lead>
  void row(const std::vector<double>& values, const Lead&... lead) {
    bool first = true;
    auto put = [&](const auto& v) {
      if (!first) os_ << ',';
      os_ << v;
      first = false;
    };
    (put(lead), ...);
    for (double v : values) put(v);
    os_ << '\n';
  }

 private:
  std::ostream& os_;
};

inline const char* event_name(int kind) {
  switch (kind) {
    case kPreJump: return "pre";
    case kPostJump: return "post";
    default: return "flow";
  }
}

/// Calls fn(t, j, kind, x) for every stored sample, kind as in SampleKind.
template <class State, class Fn>
void for_each_arc_row(const HybridArc<State>& arc, Fn&& fn) {
  const auto& segs = arc.segments();
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const auto& s = segs[k].samples;
    const bool ends_in_jump = k + 1 < segs.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
      int kind = kFlowSample;
      if (i == 0 && k > 0) kind = kPostJump;
      else if (i + 1 == s.size() && ends_in_jump) kind = kPreJump;
      fn(s[i].t, segs[k].j, kind, s[i].x);
    }
  }
}

/**
 * Writes the header and every stored sample of the arc. `row_of(t, j, x)`
 * returns the component values in the order of `columns`.
 */
template <class State, class RowFn>
void write_arc_csv(CsvWriter& w, const HybridArc<State>& arc,
                   const std::vector<std::string>& columns, RowFn&& row_of) {
  std::vector<std::string> names = {"t", "j", "event"};
  names.insert(names.end(), columns.begin(), columns.end());
  w.header(names);
  for_each_arc_row(arc, [&](double t, std::size_t j, int kind, const State& x) {
    w.row(row_of(t, j, x), t, j, event_name(kind));
  });
}

// --- reduced system rows

inline std::vector<std::string> reduced_columns() {
  return {"eta_c", "eta_s", "theta_err", "xi_err", "rho", "W1", "W2", "W3", "W4", "sigma_s"};
}

inline std::vector<double> reduced_row(const ReducedSystem& sys, double t, const Vec4& x) {
  const UnitCircle eta = ReducedSystem::eta_of(x);
  const MatrosovValues w = matrosov_eval(eta, x[2], x[3], sys.chi(t), sys.gains());
  return {eta.c(), eta.s(), wrap_angle(eta.angle()), x[2], x[3], w.w1, w.w2, w.w3, w.w4,
          sigma_s(eta, x[2], x[3])};
}

// --- co-simulation rows

inline std::vector<std::string> cosim_columns() {
  return {"i_s1",      "i_s2",       "zeta_c",    "zeta_s",    "theta",     "omega",
          "u_s1",      "u_s2",       "i_hat1",    "i_hat2",    "h_hat1",    "h_hat2",
          "zhat_chi_c", "zhat_chi_s", "xi_hat",   "rho",       "eta_c",     "eta_s",
          "theta_err", "xi_err",     "h_err_norm", "x_f_norm", "W1",        "W2",
          "W3",        "W4",         "sigma_s",   "omega_hat", "zeta_hat_c", "zeta_hat_s",
          "theta_hat", "phi_hat",    "xi_star",   "xi_star_valid"};
}

inline std::vector<double> cosim_row(const CoSimSystem& sys, double t,
                                     const CoSimSystem::State& x, FluxSaturation sat,
                                     bool omega_includes_k_eta) {
  using S = CoSimSystem;
  const auto o = sys.observe(t, x, sat, omega_includes_k_eta);
  const UnitCircle rotor(S::vec2(x, S::kRotor));
  const auto& e = o.error;
  const auto& est = o.estimates;
  return {x[S::kCurrent],
          x[S::kCurrent + 1],
          rotor.c(),
          rotor.s(),
          wrap_angle(rotor.angle()),
          o.omega,
          o.voltage.x(),
          o.voltage.y(),
          x[S::kIHat],
          x[S::kIHat + 1],
          x[S::kHHat],
          x[S::kHHat + 1],
          x[S::kFrame],
          x[S::kFrame + 1],
          x[S::kXiHat],
          x[S::kRho],
          e.eta.c(),
          e.eta.s(),
          wrap_angle(e.eta.angle()),
          e.xi_err,
          e.h_err.norm(),
          e.x_fast.norm(),
          o.matrosov.w1,
          o.matrosov.w2,
          o.matrosov.w3,
          o.matrosov.w4,
          o.sigma,
          est.omega,
          est.rotor.c(),
          est.rotor.s(),
          wrap_angle(est.rotor.angle()),
          est.flux,
          x[S::kXiStar],
          x[S::kXiStarValid]};
}

/// Jump log: pre/post misalignment, xi_hat, identifier output and |x_f|.
inline std::vector<std::string> cosim_jump_columns() {
  return {"t", "j", "theta_err_pre", "theta_err_post", "xi_hat_pre", "xi_hat_post", "xi_star",
          "xi_star_valid", "x_f_norm_pre", "x_f_norm_post"};
}

inline std::vector<double> cosim_jump_row(const CoSimSystem& sys, double t,
                                          const CoSimSystem::State& pre,
                                          const CoSimSystem::State& post, FluxSaturation sat) {
  using S = CoSimSystem;
  const auto a = sys.observe(t, pre, sat);
  const auto b = sys.observe(t, post, sat);
  return {wrap_angle(a.error.eta.angle()), wrap_angle(b.error.eta.angle()), pre[S::kXiHat],
          post[S::kXiHat], post[S::kXiStar], post[S::kXiStarValid], a.error.x_fast.norm(),
          b.error.x_fast.norm()};
}

}  // namespace hpmsm
