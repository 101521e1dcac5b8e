#pragma once

/**
 * \file analysis.hpp
 *
 * Numerical checks of the stability certificates of the reduced hybrid
 * system, the two-rate convergence bounds of the full observer and
 * convergence metrics for observer comparisons.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "hpmsm/circle.hpp"
#include "hpmsm/cosim.hpp"
#include "hpmsm/hybrid_sim.hpp"
#include "hpmsm/matrosov.hpp"
#include "hpmsm/observer.hpp"
#include "hpmsm/reduced.hpp"

namespace hpmsm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

/// Second-order derivative estimate at the middle of three unevenly spaced samples.
inline double central_difference(double t0, double f0, double t1, double f1, double t2, double f2) {
  const double h0 = t1 - t0;
  const double h1 = t2 - t1;
  return (h0 * h0 * f2 - h1 * h1 * f0 + (h1 * h1 - h0 * h0) * f1) / (h0 * h1 * (h0 + h1));
}

inline double w1_of(const Vec4& x, const ObserverGains& g) {
  return matrosov_eval(ReducedSystem::eta_of(x), x[2], x[3], 0.0, g).w1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// W1 along flows

struct FlowIdentityReport {
  std::size_t checked = 0;
  std::size_t skipped = 0;         // interior samples next to a bisected jump instant
  double max_rel_error = 0.0;
  double max_rate = -kInf;         // largest finite-difference dW1/dt seen
  double worst_t = 0.0;
  std::size_t worst_j = 0;

  bool ok(double rel_tol, double rate_tol) const {
    return max_rel_error < rel_tol && max_rate <= rate_tol;
  }
};

/**
 * Compares the finite-difference derivative of W1 at every interior sample
 * of every flow segment with -k_eta chi eta_2^2. The relative error uses
 * max(|exact|, floor_fraction k_eta chi) as denominator so that samples
 * where eta_2 crosses zero do not divide by zero. Samples whose neighbour
 * spacing ratio is below min_ratio (the short step before a jump) are
 * skipped and counted.
 */
inline FlowIdentityReport check_flow_decrease(const HybridArc<Vec4>& arc, const ReducedSystem& sys,
                                              double floor_fraction = 1e-2,
                                              double min_ratio = 0.1) {
  FlowIdentityReport r;
  const ObserverGains& g = sys.gains();
  for (const auto& seg : arc.segments()) {
    const auto& s = seg.samples;
    for (std::size_t k = 1; k + 1 < s.size(); ++k) {
      const double h0 = s[k].t - s[k - 1].t;
      const double h1 = s[k + 1].t - s[k].t;
      if (std::min(h0, h1) < min_ratio * std::max(h0, h1) || !(h0 > 0.0) || !(h1 > 0.0)) {
        ++r.skipped;
        continue;
      }
      const double fd = detail::central_difference(s[k - 1].t, detail::w1_of(s[k - 1].x, g),
                                                   s[k].t, detail::w1_of(s[k].x, g), s[k + 1].t,
                                                   detail::w1_of(s[k + 1].x, g));
      const double chi = sys.chi(s[k].t);
      const double eta2 = ReducedSystem::eta_of(s[k].x).s();
      const double exact = -g.k_eta * chi * eta2 * eta2;
      const double denom = std::max(std::abs(exact), floor_fraction * g.k_eta * chi);
      const double rel = std::abs(fd - exact) / denom;
      ++r.checked;
      r.max_rate = std::max(r.max_rate, fd);
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst_t = s[k].t;
        r.worst_j = seg.j;
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// W1, W3 across jumps

struct JumpIdentityReport {
  std::size_t jumps = 0;
  double max_w1_error = 0.0;  // |dW1 - 2 eta_1 [eta_1 < 0]|
  double max_w3_error = 0.0;  // |dW3 - (1 - e)(eta_2^2 + xi_err^2)|
  double max_w3_change = -kInf;
  double min_post_eta1 = kInf;

  bool ok(double tol) const {
    return max_w1_error <= tol && max_w3_error <= tol && min_post_eta1 >= 0.0 &&
           max_w3_change <= 0.0;
  }
};

inline void accumulate_jump(JumpIdentityReport& r, const Vec4& pre, const Vec4& post,
                            const ObserverGains& g) {
  const UnitCircle eta = ReducedSystem::eta_of(pre);
  const UnitCircle eta_p = ReducedSystem::eta_of(post);
  const MatrosovValues a = matrosov_eval(eta, pre[2], pre[3], 1.0, g);
  const MatrosovValues b = matrosov_eval(eta_p, post[2], post[3], 1.0, g);
  const double e1 = eta.c();
  const double dw1_expected = e1 < 0.0 ? 2.0 * e1 : 0.0;
  const double energy = eta.s() * eta.s() + pre[2] * pre[2];
  const double dw3_expected = (1.0 - std::numbers::e) * energy;
  const double scale = std::max(1.0, energy);
  ++r.jumps;
  r.max_w1_error = std::max(r.max_w1_error, std::abs((b.w1 - a.w1) - dw1_expected));
  r.max_w3_error = std::max(r.max_w3_error, std::abs((b.w3 - a.w3) - dw3_expected) / scale);
  r.max_w3_change = std::max(r.max_w3_change, b.w3 - a.w3);
  r.min_post_eta1 = std::min(r.min_post_eta1, eta_p.c());
}

inline JumpIdentityReport check_jump_decrease(const HybridArc<Vec4>& arc, const ObserverGains& g) {
  JumpIdentityReport r;
  for (const auto& rec : arc.jumps()) accumulate_jump(r, rec.pre, rec.post, g);
  return r;
}

// ---------------------------------------------------------------------------
// W2 at its binding locus

struct W2SignReport {
  std::size_t crossings = 0;  // eta_2 sign changes with eta_1^2 >= 1/2
  double max_excess = -kInf;  // max of dW2/dt + chi_m^2 xi_err^2 / 2

  bool ok(double tol) const { return max_excess <= tol; }
};

/**
 * At every sign change of eta_2 between consecutive samples with
 * eta_1^2 >= 1/2, the secant slope of W2 is compared with
 * -chi_min^2 xi_err^2 / 2 (xi_err taken at the midpoint).
 */
inline W2SignReport check_w2_sign(const HybridArc<Vec4>& arc, const ReducedSystem& sys,
                                  double chi_min) {
  W2SignReport r;
  const ObserverGains& g = sys.gains();
  for (const auto& seg : arc.segments()) {
    const auto& s = seg.samples;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      const UnitCircle a = ReducedSystem::eta_of(s[k].x);
      const UnitCircle b = ReducedSystem::eta_of(s[k + 1].x);
      if ((a.s() > 0.0) == (b.s() > 0.0)) continue;
      if (a.c() * a.c() < 0.5 || b.c() * b.c() < 0.5) continue;
      const double dt = s[k + 1].t - s[k].t;
      if (!(dt > 0.0)) continue;
      const double wa = matrosov_eval(a, s[k].x[2], 0.0, sys.chi(s[k].t), g).w2;
      const double wb = matrosov_eval(b, s[k + 1].x[2], 0.0, sys.chi(s[k + 1].t), g).w2;
      const double xi = 0.5 * (s[k].x[2] + s[k + 1].x[2]);
      ++r.crossings;
      r.max_excess = std::max(r.max_excess, (wb - wa) / dt + 0.5 * chi_min * chi_min * xi * xi);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Fast subsystem with the slow states frozen

struct FastDecaySetup {
  double chi = 8.357;             // V
  double eta_angle = 0.3;         // rad
  double xi_hat = 500.0;          // 1/Wb
  Vec2 voltage = Vec2(1.0, 5.0);  // in the frozen frame, V
  Vec2 i_err0 = Vec2(0.5, -0.2);  // A
  Vec2 h_err0 = Vec2(-1.0, 2.0);  // V
  double horizon_in_eps = 8.0;
  double steps_per_eps = 400.0;
  double delta_fraction = 1e-3;
};

struct FastDecayResult {
  double epsilon;
  double fitted_rate;       // 1/s, slope of -log|x_f|
  double x0_norm;
  double max_bound_excess;  // max(|x_f(t)| - exp(-t/eps)|x_f0| - delta), <= 0 when the bound holds
  std::size_t samples;

  double rate_error() const { return std::abs(fitted_rate * epsilon - 1.0); }
  bool bound_holds() const { return max_bound_excess <= 0.0; }
};

/**
 * Frame, xi_hat and the true back-EMF h are frozen; the measured current
 * follows the machine model in that (non-rotating here) frame and the
 * observer current and back-EMF rows evolve as usual. x_f then obeys
 * x_f' = A_f x_f / eps exactly when ki = 2L/eps^2.
 */
class FrozenSlowSystem {
 public:
  using State = Eigen::Matrix<double, 6, 1>;  // (i, i_hat, h_hat)

  FrozenSlowSystem(MachineParams m, ObserverGains g, const FastDecaySetup& s)
      : m_(m), g_(g), u_(s.voltage), xi_hat_(s.xi_hat) {
    h_ = -s.chi * skew_mul(UnitCircle::from_angle(s.eta_angle).vec());
  }

  const Vec2& h() const { return h_; }

  State flow(double, const State& x) const {
    const Vec2 i = x.segment<2>(0);
    ObserverState o;
    o.i_hat = x.segment<2>(2);
    o.h_hat = x.segment<2>(4);
    o.xi_hat = xi_hat_;
    const double w = frame_speed(o, g_);
    const ObserverDerivative d = ct_observer_flow(o, i, u_, m_, g_);
    State dx;
    dx.segment<2>(0) = -m_.r_over_l() * i + u_ / m_.inductance + h_ / m_.inductance - w * skew_mul(i);
    dx.segment<2>(2) = d.i_hat;
    dx.segment<2>(4) = d.h_hat;
    return dx;
  }
  State jump(double, const State& x) const { return x; }
  bool in_jump_set(double, const State&) const { return false; }

  Vec4 x_fast(const State& x) const {
    Vec4 raw;
    raw << x.segment<2>(0) - x.segment<2>(2), h_ - x.segment<2>(4);
    return fast_coordinates(g_.epsilon(m_), m_.inductance) * raw;
  }

 private:
  MachineParams m_;
  ObserverGains g_;
  Vec2 u_;
  double xi_hat_;
  Vec2 h_;
};

inline FastDecayResult fast_decay_experiment(const MachineParams& m, const ObserverGains& g,
                                             const FastDecaySetup& s = {}) {
  const FrozenSlowSystem sys(m, g, s);
  const double eps = g.epsilon(m);
  FrozenSlowSystem::State x0;
  const Vec2 i0(1.0, -2.0);
  x0 << i0, i0 - s.i_err0, sys.h() - s.h_err0;

  SimOptions opt;
  opt.step = eps / s.steps_per_eps;
  opt.horizon = s.horizon_in_eps * eps;
  const auto arc = simulate(sys, x0, opt);

  FastDecayResult r{eps, 0.0, sys.x_fast(x0).norm(), -kInf, 0};
  const double delta = s.delta_fraction * r.x0_norm;
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (const auto& smp : arc.segments().front().samples) {
    const double n = sys.x_fast(smp.x).norm();
    r.max_bound_excess =
        std::max(r.max_bound_excess, n - std::exp(-smp.t / eps) * r.x0_norm - delta);
    const double y = std::log(n);
    st += smp.t;
    sy += y;
    stt += smp.t * smp.t;
    sty += smp.t * y;
    ++r.samples;
  }
  const double nn = static_cast<double>(r.samples);
  r.fitted_rate = -(nn * sty - st * sy) / (nn * stt - st * st);
  return r;
}

// ---------------------------------------------------------------------------
// Convergence metrics of the full co-simulation

struct ConvergenceReport {
  Variant variant = Variant::hybrid;
  double t_omega = kInf;     // time after which |omega_hat - omega| <= thr |omega|
  double t_xi = kInf;        // time after which |xi_err| <= thr |xi|
  double peak_h_err = 0.0;   // V
  double peak_x_fast = 0.0;
  double final_sigma = 0.0;
  double final_xi_err = 0.0;
  std::size_t jumps = 0;
  std::optional<double> first_xi_jump_t;  // identifier: first accepted xi_hat reset
  std::optional<std::size_t> first_xi_jump_j;
};

struct ConvergenceOptions {
  double threshold = 0.05;
  std::optional<FluxSaturation> saturation;  // default: around the machine flux
  bool omega_includes_k_eta = false;
};

/**
 * Runs one co-simulation and tracks the last instant each relative error
 * was above the threshold, so the reported time is the one after which the
 * signal stays below it (infinity when it ends above).
 */
inline ConvergenceReport convergence_run(const CoSimSystem& sys, const InitialConditions& ic,
                                         SimOptions opt, const ConvergenceOptions& copt = {}) {
  ConvergenceReport r;
  r.variant = sys.config().variant;
  double last_omega_above = 0.0;
  double last_xi_above = 0.0;
  bool omega_ever_above = false;
  bool xi_ever_above = false;
  double last_t = 0.0;
  const FluxSaturation sat =
      copt.saturation.value_or(FluxSaturation::around(sys.config().machine.flux));
  CoSimSystem::State pre;
  auto on_step = [&](double t, std::size_t j, const CoSimSystem::State& x, int kind) {
    if (kind == kPreJump) {
      pre = x;
      return;
    }
    if (kind == kPostJump && !r.first_xi_jump_t &&
        x[CoSimSystem::kXiHat] != pre[CoSimSystem::kXiHat]) {
      r.first_xi_jump_t = t;
      r.first_xi_jump_j = j - 1;
    }
    const auto o = sys.observe(t, x, sat, copt.omega_includes_k_eta);
    if (std::abs(o.estimates.omega - o.omega) > copt.threshold * std::abs(o.omega)) {
      last_omega_above = t;
      omega_ever_above = true;
    }
    if (std::abs(o.error.xi_err) > copt.threshold * std::abs(o.chi.xi)) {
      last_xi_above = t;
      xi_ever_above = true;
    }
    r.peak_h_err = std::max(r.peak_h_err, o.error.h_err.norm());
    r.peak_x_fast = std::max(r.peak_x_fast, o.error.x_fast.norm());
    r.final_sigma = o.sigma;
    r.final_xi_err = o.error.xi_err;
    last_t = t;
  };
  opt.record_every = std::numeric_limits<std::size_t>::max();
  const auto arc = simulate(sys, sys.initial_state(ic), opt, on_step);
  r.jumps = arc.jump_count();
  r.t_omega = !omega_ever_above ? 0.0 : (last_omega_above >= last_t ? kInf : last_omega_above);
  r.t_xi = !xi_ever_above ? 0.0 : (last_xi_above >= last_t ? kInf : last_xi_above);
  return r;
}

/// Same configuration and initial conditions, one run per variant, in parallel.
inline std::vector<ConvergenceReport> compare_observers(const CoSimConfig& base,
                                                        const InitialConditions& ic,
                                                        const std::vector<Variant>& variants,
                                                        const SimOptions& opt,
                                                        const ConvergenceOptions& copt = {}) {
  std::vector<std::future<ConvergenceReport>> jobs;
  jobs.reserve(variants.size());
  for (Variant v : variants) {
    CoSimConfig cfg = base;
    cfg.variant = v;
    jobs.push_back(std::async(std::launch::async, [cfg, ic, opt, copt] {
      return convergence_run(CoSimSystem(cfg), ic, opt, copt);
    }));
  }
  std::vector<ConvergenceReport> out;
  out.reserve(jobs.size());
  for (auto& f : jobs) out.push_back(f.get());
  return out;
}

// ---------------------------------------------------------------------------
// Two-rate bounds over a grid of initial conditions and a list of epsilons

struct SweepPoint {
  double eta_angle;  // rad
  double xi_hat;     // 1/Wb
  Vec2 h_err0;       // V; the current error starts at zero
};

struct SweepSpec {
  std::vector<double> epsilons;
  std::vector<SweepPoint> points;
  double delta_fast = 0.0;     // absolute, x_f units
  double delta_slow = 0.0;     // final sigma_s bound
  double overshoot = 3.0;      // sup sigma_s <= overshoot * sigma_s(0) + delta_slow
  double horizon = 0.3;        // s
  double steps_per_eps = 50.0;
  double max_step = 1e-6;
};

struct SweepRow {
  double epsilon = 0.0;
  std::size_t runs = 0;
  std::size_t fast_violations = 0;  // runs breaking the x_f bound somewhere
  std::size_t slow_violations = 0;  // runs breaking the sigma_s bound
  double worst_fast_excess = -kInf;
  double worst_final_sigma = 0.0;

  bool pass() const { return fast_violations == 0 && slow_violations == 0; }
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::optional<double> smallest_passing;
};

struct SweepRunResult {
  bool fast_ok;
  bool slow_ok;
  double fast_excess;
  double final_sigma;
};

inline SweepRunResult sweep_run(const CoSimConfig& cfg, const SweepPoint& p, const SweepSpec& spec,
                                double step) {
  const CoSimSystem sys(cfg);
  InitialConditions ic;
  ic.eta_angle = p.eta_angle;
  ic.xi_hat = p.xi_hat;
  ic.exact_back_emf = true;
  ic.back_emf_offset = -p.h_err0;
  const auto x0 = sys.initial_state(ic);
  const FluxSaturation sat = FluxSaturation::around(cfg.machine.flux);
  const auto o0 = sys.observe(0.0, x0, sat);
  const double eps = cfg.gains.epsilon(cfg.machine);
  const double xf0 = o0.error.x_fast.norm();
  const double sigma0 = o0.sigma;

  SweepRunResult r{true, true, -kInf, 0.0};
  double sigma_peak = 0.0;
  auto on_step = [&](double t, std::size_t, const CoSimSystem::State& x, int) {
    const auto o = sys.observe(t, x, sat);
    const double excess = o.error.x_fast.norm() - std::exp(-t / eps) * xf0 - spec.delta_fast;
    r.fast_excess = std::max(r.fast_excess, excess);
    sigma_peak = std::max(sigma_peak, o.sigma);
    r.final_sigma = o.sigma;
  };
  SimOptions opt;
  opt.step = step;
  opt.horizon = spec.horizon;
  opt.record_every = std::numeric_limits<std::size_t>::max();
  simulate(sys, x0, opt, on_step);
  r.fast_ok = r.fast_excess <= 0.0;
  r.slow_ok = r.final_sigma <= spec.delta_slow &&
              sigma_peak <= spec.overshoot * sigma0 + spec.delta_slow;
  return r;
}

/**
 * For every epsilon (kp, ki rescaled), runs every grid point with the
 * clock starting at zero and counts runs breaking
 * |x_f(t)| <= exp(-t/eps)|x_f(0)| + delta_fast or the slow-bound check.
 */
inline SweepResult semiglobal_sweep(const CoSimConfig& base, const SweepSpec& spec) {
  if (spec.epsilons.empty() || spec.points.empty()) {
    throw std::invalid_argument("sweep needs at least one epsilon and one initial condition");
  }
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  SweepResult out;
  for (double eps : spec.epsilons) {
    CoSimConfig cfg = base;
    cfg.gains = base.gains.with_epsilon(eps, base.machine);
    const double step = std::min(spec.max_step, eps / spec.steps_per_eps);
    SweepRow row;
    row.epsilon = eps;
    for (std::size_t first = 0; first < spec.points.size(); first += workers) {
      const std::size_t last = std::min(spec.points.size(), first + workers);
      std::vector<std::future<SweepRunResult>> jobs;
      for (std::size_t k = first; k < last; ++k) {
        jobs.push_back(std::async(std::launch::async, [&cfg, &spec, &p = spec.points[k], step] {
          return sweep_run(cfg, p, spec, step);
        }));
      }
      for (auto& f : jobs) {
        const SweepRunResult r = f.get();
        ++row.runs;
        if (!r.fast_ok) ++row.fast_violations;
        if (!r.slow_ok) ++row.slow_violations;
        row.worst_fast_excess = std::max(row.worst_fast_excess, r.fast_excess);
        row.worst_final_sigma = std::max(row.worst_final_sigma, r.final_sigma);
      }
    }
    out.rows.push_back(row);
  }
  for (const auto& row : out.rows) {
    if (row.pass() && (!out.smallest_passing || row.epsilon < *out.smallest_passing)) {
      out.smallest_passing = row.epsilon;
    }
  }
  return out;
}

}  // namespace hpmsm
