#pragma once

/**
 * \file portrait.hpp
 *
 * Phase portraits of the reduced error dynamics in the (theta, xi_err)
 * plane, theta = atan2(eta_2, eta_1), and the curve of initial conditions
 * attracted by the saddle at eta = (-1, 0), xi_err = 0.
 *
 * Near the saddle, with eta = (cos(pi + d), sin(pi + d)), the flow
 * linearizes to
 *
 *   d(d, xi_err)/dt = [[k_eta chi, chi], [gamma chi, 0]] (d, xi_err),
 *
 * with eigenvalues lambda = (k_eta chi +/- sqrt(k_eta^2 chi^2 + 4 gamma chi^2)) / 2
 * and eigenvectors (lambda, gamma chi). The negative eigenvalue's branch is
 * the set from which the continuous flow converges to the saddle; it is
 * traced by integrating backward in time from the saddle.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "hpmsm/circle.hpp"
#include "hpmsm/hybrid_sim.hpp"
#include "hpmsm/matrosov.hpp"
#include "hpmsm/observer.hpp"
#include "hpmsm/reduced.hpp"

namespace hpmsm {

struct PhasePoint {
  double theta;   // rad, wrapped to [-pi, pi)
  double xi_err;  // 1/Wb
};

inline Vec4 phase_state(const PhasePoint& p, double rho = 0.0) {
  return ReducedSystem::make_state(UnitCircle::from_angle(p.theta), p.xi_err, rho);
}

inline PhasePoint phase_point(const Vec4& x) {
  return {wrap_angle(std::atan2(x[1], x[0])), x[2]};
}

/// Distance in the (theta, xi_err) plane with theta taken modulo 2 pi.
inline double phase_distance(const PhasePoint& a, const PhasePoint& b) {
  const double dt = wrap_angle(a.theta - b.theta);
  const double dx = a.xi_err - b.xi_err;
  return std::hypot(dt, dx);
}

struct SaddleLinearization {
  double lambda_stable;    // < 0
  double lambda_unstable;  // > 0
  Vec2 v_stable;           // unit, (d, xi_err) coordinates
  Vec2 v_unstable;
};

inline SaddleLinearization saddle_linearization(const ObserverGains& g, double chi) {
  const double a = g.k_eta * chi;
  const double disc = std::sqrt(a * a + 4.0 * g.gamma * chi * chi);
  SaddleLinearization s;
  s.lambda_stable = 0.5 * (a - disc);
  s.lambda_unstable = 0.5 * (a + disc);
  s.v_stable = Vec2(s.lambda_stable, g.gamma * chi).normalized();
  s.v_unstable = Vec2(s.lambda_unstable, g.gamma * chi).normalized();
  return s;
}

/// Time-reversed flow of an autonomous system without jumps.
template <HybridSystem S>
class Reversed {
 public:
  using State = typename S::State;
  explicit Reversed(const S& sys) : sys_(sys) {}
  State flow(double t, const State& x) const { return State(-sys_.flow(t, x)); }
  State jump(double, const State& x) const { return x; }
  bool in_jump_set(double, const State&) const { return false; }
  void project(State& x) const { detail::project(sys_, x); }

 private:
  const S& sys_;
};

/// One branch per sign of the initial perturbation; points run from the
/// saddle outward, i.e. in backward time.
struct ManifoldTrace {
  SaddleLinearization saddle;
  std::array<std::vector<PhasePoint>, 2> branches;

  double distance(const PhasePoint& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& b : branches) {
      for (const auto& q : b) d = std::min(d, phase_distance(p, q));
    }
    return d;
  }
};

struct ManifoldOptions {
  double perturbation = 1e-6;
  double xi_limit = 4.0;   // stop once |xi_err| exceeds this
  double max_time = 30.0;  // backward time budget, s
  double step = 1e-3;
};

inline ManifoldTrace trace_saddle_manifold(const ObserverGains& g, double chi,
                                           const ManifoldOptions& o = {}) {
  ManifoldTrace tr;
  tr.saddle = saddle_linearization(g, chi);
  const ReducedSystem fwd(g, chi, false);
  const Reversed<ReducedSystem> back(fwd);
  for (int k = 0; k < 2; ++k) {
    const double sgn = k == 0 ? 1.0 : -1.0;
    const Vec2 dv = sgn * o.perturbation * tr.saddle.v_stable;
    Vec4 x = phase_state({std::numbers::pi + dv.x(), dv.y()});
    auto& out = tr.branches[static_cast<std::size_t>(k)];
    out.push_back(phase_point(x));
    double t = 0.0;
    while (t < o.max_time && std::abs(x[2]) <= o.xi_limit) {
      x = rk4_step(back, t, x, o.step);
      back.project(x);
      t += o.step;
      out.push_back(phase_point(x));
    }
  }
  return tr;
}

/// Forward flow from p for the given time; smallest distance to the saddle seen.
inline double closest_approach_to_saddle(const PhasePoint& p, const ObserverGains& g, double chi,
                                         double time, double step = 1e-3) {
  const ReducedSystem sys(g, chi, false);
  const PhasePoint saddle{-std::numbers::pi, 0.0};
  Vec4 x = phase_state(p);
  double best = phase_distance(p, saddle);
  for (double t = 0.0; t < time; t += step) {
    x = rk4_step(sys, t, x, step);
    sys.project(x);
    best = std::min(best, phase_distance(phase_point(x), saddle));
  }
  return best;
}

struct PortraitSpec {
  ObserverGains gains{1.0, 1.0, 1.5, 1.0, 1.0};
  double chi = 1.0;
  bool hybrid = false;
  std::size_t n_theta = 24;
  std::size_t n_xi = 13;
  double xi_max = 3.0;
  double horizon = 40.0;
  double step = 1e-3;
  std::size_t record_every = 10;
  ManifoldOptions manifold{};
  double manifold_tolerance = 0.05;  // grid points closer than this count as on the curve
};

struct PortraitTrajectory {
  PhasePoint start;
  bool on_manifold;
  HybridArc<Vec4> arc;
  double final_sigma;
};

struct Portrait {
  ManifoldTrace manifold;
  std::vector<PortraitTrajectory> trajectories;
};

/// Grid theta in [-pi, pi) (n_theta points), xi_err in [-xi_max, xi_max] (n_xi points).
inline std::vector<PhasePoint> portrait_grid(const PortraitSpec& s) {
  std::vector<PhasePoint> g;
  for (std::size_t a = 0; a < s.n_theta; ++a) {
    const double th = -std::numbers::pi + 2.0 * std::numbers::pi * static_cast<double>(a) /
                                              static_cast<double>(s.n_theta);
    for (std::size_t b = 0; b < s.n_xi; ++b) {
      const double xi = s.n_xi == 1 ? 0.0
                                    : -s.xi_max + 2.0 * s.xi_max * static_cast<double>(b) /
                                                      static_cast<double>(s.n_xi - 1);
      g.push_back({th, xi});
    }
  }
  return g;
}

inline Portrait phase_portrait(const PortraitSpec& s) {
  s.gains.validate();
  Portrait p;
  p.manifold = trace_saddle_manifold(s.gains, s.chi, s.manifold);
  const ReducedSystem sys(s.gains, s.chi, s.hybrid);
  SimOptions opt;
  opt.step = s.step;
  opt.horizon = s.horizon;
  opt.record_every = s.record_every;
  for (const PhasePoint& q : portrait_grid(s)) {
    auto arc = simulate(sys, phase_state(q), opt);
    const auto& xf = arc.final_sample().x;
    const double sig = sigma_s(ReducedSystem::eta_of(xf), xf[2], xf[3]);
    const bool on = p.manifold.distance(q) < s.manifold_tolerance;
    p.trajectories.push_back({q, on, std::move(arc), sig});
  }
  return p;
}

}  // namespace hpmsm
