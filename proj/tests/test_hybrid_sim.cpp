#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "hpmsm/hybrid_sim.hpp"
#include "hpmsm/observer.hpp"
#include "hpmsm/reduced.hpp"

using namespace hpmsm;

namespace {

struct ClockOnly {
  using State = Eigen::Matrix<double, 1, 1>;
  double rate = 200.0;
  State flow(double, const State&) const { return State::Constant(rate); }
  State jump(double, const State&) const { return State::Zero(); }
  bool in_jump_set(double, const State& x) const { return Clock::expired(x[0]); }
  void snap_to_jump_set(State& x) const { x[0] = 1.0; }
};

struct Still {
  using State = Eigen::Vector2d;
  State flow(double, const State&) const { return State::Zero(); }
  State jump(double, const State& x) const { return x; }
  bool in_jump_set(double, const State&) const { return false; }
};

struct Drift {
  using State = Eigen::Vector2d;
  State flow(double, const State&) const { return {1.0, -2.0}; }
  State jump(double, const State& x) const { return x; }
  bool in_jump_set(double, const State&) const { return false; }
};

/// Damped oscillator x'' + 0.4 x' + 4 x = 0.
struct Oscillator {
  using State = Eigen::Vector2d;
  State flow(double, const State& x) const { return {x[1], -4.0 * x[0] - 0.4 * x[1]}; }
  State jump(double, const State& x) const { return x; }
  bool in_jump_set(double, const State&) const { return false; }
};

struct Blowup {
  using State = Eigen::Matrix<double, 1, 1>;
  State flow(double, const State& x) const { return State::Constant(x[0] * x[0]); }
  State jump(double, const State& x) const { return x; }
  bool in_jump_set(double, const State&) const { return false; }
};

struct AlwaysJump {
  using State = Eigen::Matrix<double, 1, 1>;
  State flow(double, const State& x) const { return x; }
  State jump(double, const State& x) const { return x; }
  bool in_jump_set(double, const State&) const { return true; }
};

}  // namespace

TEST(SimulateTest, ClockJumpsEveryPeriod) {
  SimOptions opt;
  opt.step = 1e-4;
  opt.horizon = 0.02;
  const auto arc = simulate(ClockOnly{}, ClockOnly::State::Zero(), opt);
  ASSERT_EQ(arc.jump_count(), 4u);
  const double tol = opt.step * opt.bisection_fraction + 1e-12;
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(arc.jumps()[k].t, 0.005 * static_cast<double>(k + 1), tol);
    EXPECT_EQ(arc.jumps()[k].j, k);
    EXPECT_EQ(arc.jumps()[k].post[0], 0.0);
  }
}

TEST(SimulateTest, ClockPeriodWithStepNotDividingPeriod) {
  SimOptions opt;
  opt.step = 3.7e-5;
  opt.horizon = 0.0301;
  const auto arc = simulate(ClockOnly{}, ClockOnly::State::Zero(), opt);
  ASSERT_EQ(arc.jump_count(), 6u);
  for (std::size_t k = 1; k < arc.jumps().size(); ++k) {
    EXPECT_NEAR(arc.jumps()[k].t - arc.jumps()[k - 1].t, 0.005, 2.0 * opt.step * 1e-6 + 1e-12);
  }
}

TEST(SimulateTest, FlowOnlyGivesOneConstantSegment) {
  SimOptions opt;
  opt.step = 1e-2;
  opt.horizon = 1.0;
  const Still::State x0(0.5, -3.0);
  const auto arc = simulate(Still{}, x0, opt);
  ASSERT_EQ(arc.segments().size(), 1u);
  EXPECT_EQ(arc.jump_count(), 0u);
  for (const auto& s : arc.segments()[0].samples) EXPECT_EQ(s.x, x0);
  EXPECT_NEAR(arc.final_sample().t, 1.0, 1e-12);
}

TEST(SimulateTest, ArcInvariants) {
  SimOptions opt;
  opt.step = 3e-4;
  opt.horizon = 0.05;
  const auto arc = simulate(ClockOnly{}, ClockOnly::State::Constant(0.3), opt);
  double t_prev = -1.0;
  for (std::size_t k = 0; k < arc.segments().size(); ++k) {
    const auto& seg = arc.segments()[k];
    EXPECT_EQ(seg.j, k);
    for (const auto& s : seg.samples) {
      EXPECT_GE(s.t, t_prev);
      t_prev = s.t;
    }
    if (k + 1 < arc.segments().size()) {
      const auto& rec = arc.jumps()[k];
      EXPECT_EQ(rec.j, k);
      EXPECT_EQ(seg.samples.back().x, rec.pre);
      EXPECT_EQ(seg.samples.back().t, rec.t);
      EXPECT_EQ(arc.segments()[k + 1].samples.front().x, rec.post);
      EXPECT_FALSE(ClockOnly{}.in_jump_set(rec.t, rec.post));
    }
  }
}

TEST(SimulateTest, RejectsBadOptions) {
  SimOptions opt;
  opt.step = 0.0;
  EXPECT_THROW(simulate(Still{}, Still::State::Zero(), opt), std::invalid_argument);
  opt.step = 1e-3;
  opt.horizon = 0.0;
  EXPECT_THROW(simulate(Still{}, Still::State::Zero(), opt), std::invalid_argument);
}

TEST(SimulateTest, DivergenceCarriesLastValidTime) {
  SimOptions opt;
  opt.step = 1e-2;
  opt.horizon = 5.0;
  try {
    simulate(Blowup{}, Blowup::State::Constant(1.0), opt);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    // RK4 lags the blowup at t = 1 by a few steps.
    EXPECT_GT(e.t(), 0.9);
    EXPECT_LT(e.t(), 1.1);
    EXPECT_EQ(e.j(), 0u);
  }
}

TEST(SimulateTest, ZenoSuspicion) {
  SimOptions opt;
  opt.max_jumps = 50;
  EXPECT_THROW(simulate(AlwaysJump{}, AlwaysJump::State::Constant(1.0), opt), ZenoError);
}

TEST(SimulateTest, Rk4ConvergenceOrder) {
  const Oscillator sys;
  const Oscillator::State x0(1.0, 0.0);
  // Exact solution of the underdamped oscillator.
  const double a = 0.2;
  const double w = std::sqrt(4.0 - a * a);
  const double T = 3.0;
  const Oscillator::State exact(std::exp(-a * T) * (std::cos(w * T) + a / w * std::sin(w * T)),
                                -std::exp(-a * T) * (4.0 / w) * std::sin(w * T));
  double prev = 0.0;
  for (int k = 0; k < 4; ++k) {
    SimOptions opt;
    opt.step = 0.05 / std::pow(2.0, k);
    opt.horizon = T;
    const double err = (simulate(sys, x0, opt).final_sample().x - exact).norm();
    if (k > 0) {
      EXPECT_GE(std::log2(prev / err), 3.5);
    }
    prev = err;
  }
}

TEST(SimulateTest, ReducedHybridMatchesFineStepReference) {
  ObserverGains g;
  g.k_eta = 1.5;
  g.gamma = 1.0;
  g.clock_rate = 2.0;
  const ReducedSystem sys(g, 1.0, true);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> xi(-2.0, 2.0);
  for (int k = 0; k < 10; ++k) {
    const Vec4 x0 = ReducedSystem::make_state(UnitCircle::from_angle(ang(rng)), xi(rng));
    SimOptions coarse;
    coarse.step = 1e-2;
    coarse.horizon = 3.0;
    SimOptions fine = coarse;
    fine.step = 1e-3;
    const auto a = simulate(sys, x0, coarse);
    const auto b = simulate(sys, x0, fine);
    ASSERT_EQ(a.jump_count(), b.jump_count());
    EXPECT_LT((a.final_sample().x - b.final_sample().x).norm(), 1e-6);
  }
}

TEST(ArcQueryTest, StoredSamplesLinearityAndJumps) {
  SimOptions opt;
  opt.step = 0.1;
  opt.horizon = 1.0;
  const auto arc = simulate(Drift{}, Drift::State(0.0, 0.0), opt);
  const auto& s = arc.segments()[0].samples;
  EXPECT_EQ(arc.query(s[3].t, 0), s[3].x);
  const double tm = 0.5 * (s[3].t + s[4].t);
  EXPECT_NEAR((arc.query(tm, 0) - Drift::State(tm, -2.0 * tm)).norm(), 0.0, 1e-12);
  EXPECT_THROW(arc.query(2.0, 0), DomainError);
  EXPECT_THROW(arc.query(0.5, 1), DomainError);

  SimOptions copt;
  copt.step = 1e-4;
  copt.horizon = 0.012;
  const auto carc = simulate(ClockOnly{}, ClockOnly::State::Zero(), copt);
  const auto& rec = carc.jumps()[0];
  EXPECT_EQ(carc.query(rec.t, 0), rec.pre);
  EXPECT_EQ(carc.query(rec.t, 1), rec.post);
}

TEST(SimulateTest, CallbackSeesEveryStepAndJump) {
  SimOptions opt;
  opt.step = 1e-4;
  opt.horizon = 0.011;
  opt.record_every = 1000;
  std::size_t pre = 0;
  std::size_t post = 0;
  std::size_t flow = 0;
  const auto arc = simulate(ClockOnly{}, ClockOnly::State::Zero(), opt,
                            [&](double, std::size_t, const ClockOnly::State&, int kind) {
                              if (kind == kPreJump) ++pre;
                              else if (kind == kPostJump) ++post;
                              else ++flow;
                            });
  EXPECT_EQ(pre, 2u);
  EXPECT_EQ(post, 2u);
  EXPECT_GT(flow, 100u);
  EXPECT_LT(arc.segments()[0].samples.size(), 10u);
}
