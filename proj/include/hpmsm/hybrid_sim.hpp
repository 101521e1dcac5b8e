#pragma once

/**
 * \file hybrid_sim.hpp
 *
 * Fixed-step simulation of hybrid systems
 *
 *     x'  = f(t, x)    while x is not in the jump set D
 *     x+  = g(t, x)    when x is in D
 *
 * producing hybrid arcs indexed by hybrid time (t, j). Flows are integrated
 * with classical RK4; when a step lands in D the crossing instant is
 * located by bisection on the step length and the jump map is applied there.
 *
 * A system type S plugs in by providing
 *
 *     using State = ...;                       // supports +, scalar *
 *     State flow(double t, const State&) const;
 *     State jump(double t, const State&) const;
 *     bool  in_jump_set(double t, const State&) const;
 *
 * and optionally
 *
 *     void project(State&) const;              // e.g. renormalize S1 components
 *     void snap_to_jump_set(State&) const;     // e.g. set a clock to exactly 1
 */

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpmsm {

template <class S>
concept HybridSystem = requires(const S& sys, double t, const typename S::State& x) {
  { sys.flow(t, x) } -> std::convertible_to<typename S::State>;
  { sys.jump(t, x) } -> std::convertible_to<typename S::State>;
  { sys.in_jump_set(t, x) } -> std::convertible_to<bool>;
};

/// Non-finite state during flow.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(double t, std::size_t j)
      : std::runtime_error(message(t, j)), t_(t), j_(j) {}

  /// Hybrid time of the last valid sample.
  double t() const { return t_; }
  std::size_t j() const { return j_; }

 private:
  static std::string message(double t, std::size_t j) {
    std::ostringstream os;
    os << "simulation diverged after (t = " << t << ", j = " << j << ")";
    return os.str();
  }
  double t_;
  std::size_t j_;
};

/// More jumps than allowed; with clock-driven systems this means a bug.
class ZenoError : public std::runtime_error {
 public:
  ZenoError(double t, std::size_t j)
      : std::runtime_error("maximum jump count exceeded (Zeno suspicion) at t = " +
                           std::to_string(t) + ", j = " + std::to_string(j)),
        t_(t) {}
  double t() const { return t_; }

 private:
  double t_;
};

/// (t, j) outside the domain of an arc.
class DomainError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

template <class State>
struct Sample {
  double t;
  State x;
};

template <class State>
struct FlowSegment {
  std::size_t j;
  std::vector<Sample<State>> samples;

  double t_begin() const { return samples.front().t; }
  double t_end() const { return samples.back().t; }
};

/// Jump from (t, j) to (t, j + 1).
template <class State>
struct JumpRecord {
  double t;
  std::size_t j;
  State pre;
  State post;
};

/**
 * A hybrid arc: flow segments j = 0, 1, ... separated by jumps.
 *
 * The last sample of segment j is the pre-jump state of jump j and the first
 * sample of segment j + 1 is its post-jump state.
 */
template <class State>
class HybridArc {
 public:
  const std::vector<FlowSegment<State>>& segments() const { return segments_; }
  const std::vector<JumpRecord<State>>& jumps() const { return jumps_; }

  std::size_t jump_count() const { return jumps_.size(); }

  const Sample<State>& final_sample() const { return segments_.back().samples.back(); }

  /// Linear interpolation within the segment with jump counter j.
  State query(double t, std::size_t j) const {
    if (j >= segments_.size()) {
      throw DomainError("arc query: jump index " + std::to_string(j) + " out of range");
    }
    const auto& samples = segments_[j].samples;
    const double tol = 1e-12 * std::max(1.0, std::abs(t));
    if (t < samples.front().t - tol || t > samples.back().t + tol) {
      throw DomainError("arc query: t = " + std::to_string(t) + " not in segment " +
                        std::to_string(j));
    }
    if (t <= samples.front().t) return samples.front().x;
    if (t >= samples.back().t) return samples.back().x;
    auto hi = std::lower_bound(samples.begin(), samples.end(), t,
                               [](const Sample<State>& s, double v) { return s.t < v; });
    if (hi->t == t) return hi->x;
    auto lo = hi - 1;
    const double w = (t - lo->t) / (hi->t - lo->t);
    return State(lo->x + w * (hi->x - lo->x));
  }

  // Construction interface used by simulate().
  void begin_segment(std::size_t j, double t, const State& x) {
    segments_.push_back(FlowSegment<State>{j, {Sample<State>{t, x}}});
  }
  void push_sample(double t, const State& x) { segments_.back().samples.push_back({t, x}); }
  void push_jump(JumpRecord<State> rec) { jumps_.push_back(std::move(rec)); }
  void replace_last(const State& x) { segments_.back().samples.back().x = x; }

 private:
  std::vector<FlowSegment<State>> segments_;
  std::vector<JumpRecord<State>> jumps_;
};

struct SimOptions {
  double step = 1e-6;
  double horizon = 1.0;
  std::size_t max_jumps = 1'000'000;
  /// Keep every k-th flow step in the arc; segment endpoints are always kept.
  std::size_t record_every = 1;
  /// Jump instants are located to within step * bisection_fraction.
  double bisection_fraction = 1e-6;
};

namespace detail {

template <class S>
void project(const S& sys, typename S::State& x) {
  if constexpr (requires { sys.project(x); }) sys.project(x);
}

template <class S>
void snap(const S& sys, typename S::State& x) {
  if constexpr (requires { sys.snap_to_jump_set(x); }) sys.snap_to_jump_set(x);
}

template <class State>
bool all_finite(const State& x) {
  if constexpr (requires { x.allFinite(); }) {
    return x.allFinite();
  } else if constexpr (std::is_arithmetic_v<State>) {
    return std::isfinite(x);
  } else {
    for (const auto& v : x) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
}

}  // namespace detail

/// One classical Runge-Kutta step of the flow map.
template <HybridSystem S>
typename S::State rk4_step(const S& sys, double t, const typename S::State& x, double h) {
  using State = typename S::State;
  const State k1 = sys.flow(t, x);
  const State k2 = sys.flow(t + 0.5 * h, State(x + (0.5 * h) * k1));
  const State k3 = sys.flow(t + 0.5 * h, State(x + (0.5 * h) * k2));
  const State k4 = sys.flow(t + h, State(x + h * k3));
  return State(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

/// Called for every state the engine visits, recorded or not. The flag is
/// 0 for flow samples, 1 for pre-jump and 2 for post-jump states.
template <class State>
using StepCallback = std::function<void(double t, std::size_t j, const State& x, int kind)>;

enum SampleKind : int { kFlowSample = 0, kPreJump = 1, kPostJump = 2 };

/**
 * Integrates sys from x0 over [0, horizon].
 *
 * Throws std::invalid_argument for a non-positive step or horizon,
 * DivergenceError when the state becomes non-finite and ZenoError when the
 * jump budget is exhausted.
 */
template <HybridSystem S>
HybridArc<typename S::State> simulate(const S& sys, typename S::State x0, const SimOptions& opt,
                                      const StepCallback<typename S::State>& on_step = {}) {
  using State = typename S::State;
  if (!(opt.step > 0.0) || !std::isfinite(opt.step)) {
    throw std::invalid_argument("simulate: step must be positive");
  }
  if (!(opt.horizon > 0.0) || !std::isfinite(opt.horizon)) {
    throw std::invalid_argument("simulate: horizon must be positive");
  }
  if (!detail::all_finite(x0)) throw std::invalid_argument("simulate: initial state not finite");
  const std::size_t record_every = std::max<std::size_t>(1, opt.record_every);

  HybridArc<State> arc;
  double t = 0.0;
  std::size_t j = 0;
  State x = std::move(x0);
  detail::project(sys, x);
  arc.begin_segment(j, t, x);
  if (on_step) on_step(t, j, x, kFlowSample);

  std::size_t steps_since_record = 0;
  const double t_eps = opt.step * opt.bisection_fraction;
  while (true) {
    // Invariant here: the arc's last sample is (t, x).
    if (sys.in_jump_set(t, x)) {
      detail::snap(sys, x);
      arc.replace_last(x);
      if (on_step) on_step(t, j, x, kPreJump);
      State post = sys.jump(t, x);
      detail::project(sys, post);
      if (!detail::all_finite(post)) throw DivergenceError(t, j);
      arc.push_jump(JumpRecord<State>{t, j, x, post});
      ++j;
      if (arc.jump_count() > opt.max_jumps) throw ZenoError(t, j);
      arc.begin_segment(j, t, post);
      if (on_step) on_step(t, j, post, kPostJump);
      x = std::move(post);
      steps_since_record = 0;
      continue;
    }
    if (t >= opt.horizon - t_eps) break;

    const double h = std::min(opt.step, opt.horizon - t);
    State xn = rk4_step(sys, t, x, h);
    detail::project(sys, xn);
    if (!detail::all_finite(xn)) throw DivergenceError(t, j);

    if (sys.in_jump_set(t + h, xn)) {
      double lo = 0.0;
      double hi = h;
      while (hi - lo > t_eps) {
        const double mid = 0.5 * (lo + hi);
        State xm = rk4_step(sys, t, x, mid);
        detail::project(sys, xm);
        if (sys.in_jump_set(t + mid, xm)) hi = mid;
        else lo = mid;
      }
      if (hi < h) {
        xn = rk4_step(sys, t, x, hi);
        detail::project(sys, xn);
        if (!detail::all_finite(xn)) throw DivergenceError(t, j);
      }
      t += hi;
      x = std::move(xn);
      arc.push_sample(t, x);
      steps_since_record = 0;
      continue;
    }

    t += h;
    x = std::move(xn);
    ++steps_since_record;
    if (on_step) on_step(t, j, x, kFlowSample);
    if (steps_since_record >= record_every) {
      arc.push_sample(t, x);
      steps_since_record = 0;
    }
  }
  if (arc.final_sample().t != t) arc.push_sample(t, x);
  return arc;
}

/// The periodic clock rho' = Lambda on [0, 1], rho+ = 0 at rho = 1.
struct Clock {
  /// Tolerance on rho = 1; well above the rounding accumulated over a period.
  static constexpr double kTolerance = 1e-10;

  double rate;  // Lambda, 1/s

  double period() const { return 1.0 / rate; }
  static bool expired(double rho) { return rho >= 1.0 - kTolerance; }
};

}  // namespace hpmsm
