#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "hpmsm/cosim.hpp"
#include "hpmsm/hybrid_sim.hpp"
#include "hpmsm/matrosov.hpp"
#include "hpmsm/observer.hpp"
#include "hpmsm/reduced.hpp"
#include "support.hpp"

using namespace hpmsm;
using std::numbers::pi;

namespace {

const MachineParams kMachine;
const ObserverGains kGains;

double nominal() { return fixtures::nominal_speed(); }

// Observer seeded with exact estimates for the given plant point.
struct PerfectPoint {
  ObserverState obs;
  Vec2 i_frame;
  Vec2 u_frame;
  ChiQuantities q;
};

PerfectPoint perfect_point(double omega, double rotor_angle, const Vec2& i_s, const Vec2& u_s) {
  PerfectPoint p;
  const UnitCircle rotor = UnitCircle::from_angle(rotor_angle);
  p.q = chi_quantities(omega, 0.0, rotor, kMachine);
  p.obs.frame = p.q.frame;
  p.obs.xi_hat = p.q.xi;
  p.obs.h_hat = Vec2(0.0, -p.q.chi);  // -chi J (1, 0)
  p.i_frame = to_rotating_frame(p.obs.frame, i_s);
  p.u_frame = to_rotating_frame(p.obs.frame, u_s);
  p.obs.i_hat = p.i_frame;
  return p;
}

double time_to_sigma(const ReducedSystem& sys, const Vec4& x0, double step, double horizon,
                     double level) {
  SimOptions opt;
  opt.step = step;
  opt.horizon = horizon;
  opt.record_every = std::numeric_limits<std::size_t>::max();
  double hit = std::numeric_limits<double>::infinity();
  simulate(sys, x0, opt, [&](double t, std::size_t, const Vec4& x, int) {
    if (t < hit && sigma_s(ReducedSystem::eta_of(x), x[2]) < level) hit = t;
  });
  return hit;
}

}  // namespace

TEST(GainsTest, EpsilonAndIntegralGainAgree) {
  const double eps = kGains.epsilon(kMachine);
  EXPECT_NEAR(eps, 8.48e-5, 0.01e-5);
  EXPECT_NEAR(kGains.ki_from_epsilon(kMachine) / kGains.ki, 1.0, 0.01);
  const ObserverGains g = kGains.with_epsilon(eps / 3.0, kMachine);
  EXPECT_NEAR(g.epsilon(kMachine), eps / 3.0, 1e-15);
  EXPECT_NEAR(g.ki, g.ki_from_epsilon(kMachine), 1e-9 * g.ki);
  EXPECT_THROW(kGains.with_epsilon(1.0, kMachine), std::invalid_argument);
}

TEST(CtObserverTest, ZeroErrorStationarity) {
  ObserverState o;
  o.frame = UnitCircle::from_angle(0.3);
  o.i_hat = Vec2(1.0, 2.0);
  o.h_hat = Vec2(0.0, -4.0);
  o.xi_hat = 300.0;
  const auto d = ct_observer_flow(o, o.i_hat, Vec2(1.0, 1.0), kMachine, kGains);
  EXPECT_EQ(d.h_hat.norm(), 0.0);
  EXPECT_EQ(d.xi_hat, 0.0);
}

TEST(CtObserverTest, PerfectEstimatesCancel) {
  for (double omega : {nominal(), -0.5 * nominal()}) {
    const Vec2 i_s(3.0, -1.0);
    const Vec2 u_s(2.0, 7.0);
    const double angle = 0.9;
    const PerfectPoint p = perfect_point(omega, angle, i_s, u_s);
    EXPECT_NEAR(frame_speed(p.obs, kGains), omega, 1e-9 * std::abs(omega));
    const auto d = ct_observer_flow(p.obs, p.i_frame, p.u_frame, kMachine, kGains);
    const Vec2 di = rotating_frame_current_flow(p.i_frame, p.u_frame, UnitCircle::from_angle(angle),
                                                p.obs.frame, omega, frame_speed(p.obs, kGains),
                                                kMachine);
    EXPECT_LT((di - d.i_hat).norm(), 1e-6);
    EXPECT_EQ(d.h_hat.norm(), 0.0);
    EXPECT_EQ(d.xi_hat, 0.0);
  }
}

TEST(PhysicalEstimatesTest, ExactCase) {
  const PerfectPoint p = perfect_point(nominal(), 2.0, Vec2::Zero(), Vec2::Zero());
  const auto e = physical_estimates(p.obs, FluxSaturation::around(kMachine.flux), kGains);
  EXPECT_NEAR(e.omega, nominal(), 1e-9 * nominal());
  EXPECT_NEAR(e.flux, 1.9e-3, 1e-15);
  EXPECT_NEAR((e.rotor.vec() - UnitCircle::from_angle(2.0).vec()).norm(), 0.0, 1e-15);

  const PerfectPoint n = perfect_point(-nominal(), 2.0, Vec2::Zero(), Vec2::Zero());
  const auto en = physical_estimates(n.obs, FluxSaturation::around(kMachine.flux), kGains);
  EXPECT_NEAR(en.omega, -nominal(), 1e-9 * nominal());
  EXPECT_NEAR((en.rotor.vec() - UnitCircle::from_angle(2.0).vec()).norm(), 0.0, 1e-15);
}

TEST(PhysicalEstimatesTest, FluxSaturationAndKEta) {
  const FluxSaturation sat = FluxSaturation::around(kMachine.flux);
  ObserverState o;
  o.h_hat = Vec2(0.5, 2.0);
  o.xi_hat = 0.0;
  EXPECT_EQ(physical_estimates(o, sat, kGains).flux, 3.8e-3);
  EXPECT_EQ(physical_estimates(o, sat, kGains).rotor.c(), 1.0);
  o.xi_hat = 10.0;
  EXPECT_EQ(physical_estimates(o, sat, kGains).flux, sat.hi);
  o.xi_hat = 1e6;
  EXPECT_EQ(physical_estimates(o, sat, kGains).flux, sat.lo);
  o.xi_hat = 526.3;
  EXPECT_NEAR(physical_estimates(o, sat, kGains).flux, 1.0 / 526.3, 1e-15);
  const double w0 = physical_estimates(o, sat, kGains).omega;
  EXPECT_NEAR(physical_estimates(o, sat, kGains, true).omega - w0, kGains.k_eta * 0.5, 1e-9);
  EXPECT_THROW(physical_estimates(o, {1.0, 0.5}, kGains), std::invalid_argument);
}

TEST(ReducedFlowTest, PhasePlaneExample) {
  const auto g = fixtures::phase_plane_gains();
  const auto d = reduced_flow(UnitCircle(0.0, 1.0), 0.0, 1.0, g);
  EXPECT_NEAR(d.eta.x(), 1.5, 1e-15);
  EXPECT_NEAR(d.eta.y(), 0.0, 1e-15);
  EXPECT_NEAR(d.xi_err, -1.0, 1e-15);
}

TEST(ReducedFlowTest, EquilibriaAreExact) {
  for (const auto& g : {fixtures::phase_plane_gains(), kGains}) {
    for (const UnitCircle& eta : {UnitCircle(1.0, 0.0), UnitCircle(-1.0, 0.0)}) {
      const auto d = reduced_flow(eta, 0.0, 8.357, g);
      EXPECT_EQ(d.eta.norm(), 0.0);
      EXPECT_EQ(d.xi_err, 0.0);
    }
  }
}

TEST(ReducedJumpTest, Examples) {
  const UnitCircle a = reduced_jump(UnitCircle(-0.6, 0.8));
  EXPECT_NEAR(a.c(), 0.6, 1e-15);
  EXPECT_NEAR(a.s(), 0.8, 1e-15);
  const UnitCircle b = reduced_jump(UnitCircle(0.6, 0.8));
  EXPECT_NEAR(b.c(), 0.6, 1e-15);
  EXPECT_NEAR(b.s(), 0.8, 1e-15);
  const UnitCircle c = reduced_jump(UnitCircle(0.0, -1.0));
  EXPECT_EQ(c.c(), 0.0);
  EXPECT_EQ(c.s(), -1.0);
}

TEST(ReducedSystemTest, HybridTwiceAsFastFromNearSaddle) {
  const auto g = fixtures::phase_plane_gains(200.0);
  const Vec4 x0 = ReducedSystem::make_state(UnitCircle::from_angle(pi - 0.01), 0.0);
  const double t_hyb = time_to_sigma(ReducedSystem(g, 1.0, true), x0, 1e-4, 30.0, 0.01);
  const double t_ct = time_to_sigma(ReducedSystem(g, 1.0, false), x0, 1e-3, 30.0, 0.01);
  ASSERT_TRUE(std::isfinite(t_hyb));
  ASSERT_TRUE(std::isfinite(t_ct));
  EXPECT_LE(2.0 * t_hyb, t_ct);
}

TEST(JumpZetaTest, Examples) {
  const double chi = 8.357;
  // eta = (-1, 0): exact h_hat = -chi J eta = (0, chi)
  const UnitCircle z = jump_zeta(Vec2(0.0, chi), UnitCircle::identity());
  EXPECT_NEAR(z.c(), -1.0, 1e-15);
  EXPECT_NEAR(z.s(), 0.0, 1e-15);
  const UnitCircle eta_post = group_mul(z.inverse(), UnitCircle(-1.0, 0.0));
  EXPECT_NEAR(eta_post.c(), 1.0, 1e-15);

  const UnitCircle f = UnitCircle::from_angle(0.4);
  const UnitCircle kept = jump_zeta(Vec2(1.0, -2.0), f);
  EXPECT_EQ(kept.vec(), f.vec());
  EXPECT_EQ(jump_zeta(Vec2::Zero(), f).vec(), f.vec());
}

TEST(JumpZetaTest, ExactBackEmfSweepMatchesReducedJump) {
  const double chi = 3.0;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-pi, pi);
  for (int k = 0; k < 360; ++k) {
    const UnitCircle eta = UnitCircle::from_angle(-pi + 2.0 * pi * k / 360.0);
    const UnitCircle frame = UnitCircle::from_angle(u(rng));
    const UnitCircle chi_frame = group_mul(frame, eta);
    const Vec2 h = -chi * skew_mul(eta.vec());
    const UnitCircle next = jump_zeta(h, frame);
    const UnitCircle eta_post = group_mul(next.inverse(), chi_frame);
    const UnitCircle expected = reduced_jump(eta);
    EXPECT_GE(eta_post.c(), -1e-12);
    EXPECT_NEAR((eta_post.vec() - expected.vec()).norm(), 0.0, 1e-12) << "angle index " << k;
    EXPECT_LT(next.norm_defect(), 1e-14);
  }
}

TEST(JumpFrameTest, RotationProperties) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int k = 0; k < 500; ++k) {
    const Vec2 h(u(rng), u(rng));
    const UnitCircle f = UnitCircle::from_angle(u(rng));
    const Mat2 g = jump_frame(h, f);
    EXPECT_NEAR((g.transpose() * g - Mat2::Identity()).norm(), 0.0, 1e-14);
    EXPECT_NEAR(g.determinant(), 1.0, 1e-14);
    const Vec2 v(u(rng), u(rng));
    EXPECT_NEAR((g * v).norm(), v.norm(), 1e-12);
    if (h.y() < 0.0) {
      EXPECT_NEAR((g - Mat2::Identity()).norm(), 0.0, 1e-15);
    }
  }
}

TEST(ErrorCoordsTest, ExactEstimatesGiveZero) {
  const PerfectPoint p = perfect_point(nominal(), 0.7, Vec2(1.0, 2.0), Vec2::Zero());
  const auto e = error_coords(p.i_frame, p.q.chi, p.q.frame, p.q.xi, p.obs, kMachine, kGains);
  EXPECT_NEAR(e.eta.c(), 1.0, 1e-15);
  EXPECT_NEAR(e.eta.s(), 0.0, 1e-15);
  EXPECT_EQ(e.xi_err, 0.0);
  EXPECT_LT(e.x_fast.norm(), 1e-9);
}

TEST(ErrorCoordsTest, BlockArithmetic) {
  const Mat4 t = fast_coordinates(1.0, kMachine.inductance);
  Vec4 raw;
  raw << 0.0, 0.0, kMachine.inductance, 0.0;
  const Vec4 xf = t * raw;
  EXPECT_NEAR((xf - Vec4(0.0, 0.0, 1.0, 0.0)).norm(), 0.0, 1e-15);
  const Vec4 xf2 = fast_coordinates(0.5, 2.0) * Vec4(1.0, -1.0, 4.0, 2.0);
  EXPECT_NEAR((xf2 - Vec4(2.0, -2.0, 0.0, 3.0)).norm(), 0.0, 1e-15);
}

TEST(ErrorCoordsTest, FastFlowMatrixIsStrictlyDissipative) {
  const Mat4 a = fast_flow_matrix();
  EXPECT_EQ(a + a.transpose(), -2.0 * Mat4::Identity());
}

TEST(ErrorCoordsTest, FastCoordinatesFollowFlowMatrix) {
  // Frozen frame and xi_hat, constant true back-EMF: x_f' = A_f x_f / eps.
  const double eps = kGains.epsilon(kMachine);
  ObserverGains g = kGains;
  g.ki = g.ki_from_epsilon(kMachine);
  ObserverState o;
  o.i_hat = Vec2(0.3, -0.1);
  o.h_hat = Vec2(0.0, -7.0);  // h_hat_1 = 0 and xi_hat = 0: the frame does not turn
  o.xi_hat = 0.0;
  const Vec2 i(0.5, 0.2);
  const Vec2 h(0.4, -8.0);
  const Vec2 u(1.0, 3.0);
  const auto d = ct_observer_flow(o, i, u, kMachine, g);
  const Vec2 di = -kMachine.r_over_l() * i + u / kMachine.inductance + h / kMachine.inductance;
  Vec4 raw;
  raw << i - o.i_hat, h - o.h_hat;
  Vec4 draw;
  draw << di - d.i_hat, -d.h_hat;
  const Mat4 t = fast_coordinates(eps, kMachine.inductance);
  const Vec4 lhs = t * draw;
  const Vec4 rhs = fast_flow_matrix() * (t * raw) / eps;
  EXPECT_LT((lhs - rhs).norm(), 1e-9 * rhs.norm());
}

TEST(HybridObserverTest, AlignedStartMatchesContinuous) {
  InitialConditions ic;
  ic.rotor_angle = 0.4;
  ic.xi_hat = 1.0 / kMachine.flux;
  ic.exact_back_emf = true;
  SimOptions opt;
  opt.horizon = 0.02;
  const CoSimSystem ct(fixtures::table_config(Variant::continuous));
  const CoSimSystem hy(fixtures::table_config(Variant::hybrid));
  const auto a = simulate(ct, ct.initial_state(ic), opt);
  const auto b = simulate(hy, hy.initial_state(ic), opt);
  EXPECT_EQ(b.jump_count(), 4u);
  for (const auto& rec : b.jumps()) {
    EXPECT_NEAR(rec.post[CoSimSystem::kFrame], rec.pre[CoSimSystem::kFrame], 1e-15);
    EXPECT_NEAR(rec.post[CoSimSystem::kFrame + 1], rec.pre[CoSimSystem::kFrame + 1], 1e-15);
  }
  auto xa = a.final_sample().x;
  auto xb = b.final_sample().x;
  xa[CoSimSystem::kRho] = xb[CoSimSystem::kRho] = 0.0;
  EXPECT_LT((xa - xb).norm(), 1e-8 * xa.norm());
  const auto o = hy.observe(opt.horizon, b.final_sample().x, FluxSaturation::around(kMachine.flux));
  EXPECT_LT(o.sigma, 1e-9);
  EXPECT_LT(o.error.x_fast.norm(), 1e-4);
}

TEST(HybridObserverTest, JumpsPreserveFastErrorNorm) {
  for (Variant v : {Variant::hybrid, Variant::hybrid_identifier}) {
    const CoSimSystem sys(fixtures::table_config(v));
    InitialConditions ic;
    ic.rotor_angle = -1.0;
    ic.eta_angle = 2.5;
    ic.xi_hat = 200.0;
    ic.back_emf_offset = Vec2(1.0, -3.0);
    ic.current_estimate_offset = Vec2(0.2, 0.1);
    SimOptions opt;
    opt.horizon = 0.05;
    opt.record_every = std::numeric_limits<std::size_t>::max();
    const FluxSaturation sat = FluxSaturation::around(kMachine.flux);
    CoSimSystem::State pre;
    double pre_t = 0.0;
    std::size_t checked = 0;
    simulate(sys, sys.initial_state(ic), opt,
             [&](double t, std::size_t, const CoSimSystem::State& x, int kind) {
               if (kind == kPreJump) {
                 pre = x;
                 pre_t = t;
               } else if (kind == kPostJump) {
                 const double a = sys.observe(pre_t, pre, sat).error.x_fast.norm();
                 const double b = sys.observe(t, x, sat).error.x_fast.norm();
                 EXPECT_LE(std::abs(a - b), 1e-12 * std::max(1.0, a));
                 ++checked;
               }
             });
    EXPECT_EQ(checked, 10u);
  }
}
