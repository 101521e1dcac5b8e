#pragma once

/**
 * \file cosim.hpp
 *
 * Co-simulation of the machine, the excitation current loop and one
 * observer variant as a single hybrid system. The observer only sees the
 * stator current and voltage; error coordinates are computed afterwards
 * from the joint state (see CoSimSystem::observe).
 *
 * State vector layout (CoSimSystem::State):
 *
 *   0-1   i_s            stator current, static frame
 *   2-3   zeta           rotor
 *   4-5   loop integral  current-loop PI state (rotor frame)
 *   6-7   i_hat
 *   8-9   h_hat
 *   10-11 zeta_hat_chi
 *   12    xi_hat
 *   13    rho
 *   14    xi_star        last identifier estimate (output only)
 *   15    xi_star_valid  1 when xi_star holds a usable estimate
 *   16..  identifier registers (identifier variant only), see pack()
 */

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "hpmsm/circle.hpp"
#include "hpmsm/drive.hpp"
#include "hpmsm/hybrid_sim.hpp"
#include "hpmsm/identifier.hpp"
#include "hpmsm/matrosov.hpp"
#include "hpmsm/observer.hpp"
#include "hpmsm/plant.hpp"
#include "hpmsm/speed_profile.hpp"

namespace hpmsm {

enum class Variant { continuous, hybrid, hybrid_identifier };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::continuous: return "continuous";
    case Variant::hybrid: return "hybrid";
    case Variant::hybrid_identifier: return "hybrid+identifier";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "continuous") return Variant::continuous;
  if (s == "hybrid") return Variant::hybrid;
  if (s == "hybrid+identifier" || s == "hybrid_identifier" || s == "identifier") {
    return Variant::hybrid_identifier;
  }
  throw std::invalid_argument("unknown observer variant '" + s + "'");
}

/// What the identifier integrates: the observer estimates, or (for checking
/// the regression identity) the true chi-frame signal.
enum class RegressorSource { estimates, exact };

struct CoSimConfig {
  MachineParams machine;
  ObserverGains gains;
  SpeedProfile profile = SpeedProfile::constant(1.0, {0.5, 2.0, 0.0});
  CurrentLoopGains loop{0.0, 0.0, 1e9};
  Vec2 current_ref_dq = Vec2::Zero();  // A, rotor frame
  Variant variant = Variant::hybrid;
  std::size_t window = 2;
  double degeneracy_floor = 1e-12;
  RegressorSource regressor = RegressorSource::estimates;
};

struct InitialConditions {
  double rotor_angle = 0.0;             // rad
  Vec2 current = Vec2::Zero();          // i_s(0), A
  Vec2 loop_integral = Vec2::Zero();
  double eta_angle = 0.0;               // misalignment, rad
  double xi_hat = 0.0;                  // 1/Wb
  bool exact_current_estimate = true;   // i_hat(0) = measured current
  Vec2 current_estimate_offset = Vec2::Zero();
  bool exact_back_emf = false;          // h_hat(0) = h(0), otherwise h_hat(0) = h_offset
  Vec2 back_emf_offset = Vec2::Zero();
  double rho = 0.0;
};

class CoSimSystem {
 public:
  using State = Eigen::VectorXd;

  static constexpr std::size_t kCurrent = 0;
  static constexpr std::size_t kRotor = 2;
  static constexpr std::size_t kLoop = 4;
  static constexpr std::size_t kIHat = 6;
  static constexpr std::size_t kHHat = 8;
  static constexpr std::size_t kFrame = 10;
  static constexpr std::size_t kXiHat = 12;
  static constexpr std::size_t kRho = 13;
  static constexpr std::size_t kXiStar = 14;
  static constexpr std::size_t kXiStarValid = 15;
  static constexpr std::size_t kRegisters = 16;

  explicit CoSimSystem(CoSimConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.machine.validate();
    cfg_.gains.validate();
    if (identifier_active() && cfg_.window < 1) {
      throw std::invalid_argument("identifier window N must be >= 1");
    }
  }

  const CoSimConfig& config() const { return cfg_; }

  bool identifier_active() const { return cfg_.variant == Variant::hybrid_identifier; }

  std::size_t dimension() const {
    return kRegisters + (identifier_active() ? packed_size(cfg_.window) : 0);
  }

  static Vec2 vec2(const State& x, std::size_t k) { return {x[k], x[k + 1]}; }
  static void set_vec2(State& x, std::size_t k, const Vec2& v) {
    x[k] = v.x();
    x[k + 1] = v.y();
  }

  static ObserverState observer_of(const State& x) {
    ObserverState o;
    o.i_hat = vec2(x, kIHat);
    o.h_hat = vec2(x, kHHat);
    o.frame = UnitCircle(vec2(x, kFrame));
    o.xi_hat = x[kXiHat];
    o.rho = x[kRho];
    return o;
  }

  static PlantState plant_of(const State& x) {
    return {vec2(x, kCurrent), UnitCircle(vec2(x, kRotor))};
  }

  IdentifierRegisters registers_of(const State& x) const {
    return unpack(std::span<const double>(x.data() + kRegisters, packed_size(cfg_.window)),
                  cfg_.window);
  }

  State initial_state(const InitialConditions& ic) const {
    State x = State::Zero(static_cast<Eigen::Index>(dimension()));
    const UnitCircle rotor = UnitCircle::from_angle(ic.rotor_angle);
    const double omega = cfg_.profile.eval(0.0).omega;
    const ChiQuantities q = chi_quantities(omega, 0.0, rotor, cfg_.machine);
    const UnitCircle eta = UnitCircle::from_angle(ic.eta_angle);
    const UnitCircle frame = group_mul(q.frame, eta.inverse());

    set_vec2(x, kCurrent, ic.current);
    set_vec2(x, kRotor, rotor.vec());
    set_vec2(x, kLoop, ic.loop_integral);
    const Vec2 i_meas = to_rotating_frame(frame, ic.current);
    set_vec2(x, kIHat, (ic.exact_current_estimate ? i_meas : Vec2::Zero()) +
                           ic.current_estimate_offset);
    const Vec2 h = -q.chi * skew_mul(eta.vec());
    set_vec2(x, kHHat, (ic.exact_back_emf ? h : Vec2::Zero()) + ic.back_emf_offset);
    set_vec2(x, kFrame, frame.vec());
    x[kXiHat] = ic.xi_hat;
    x[kRho] = ic.rho;
    if (identifier_active()) {
      pack(IdentifierRegisters(cfg_.window),
           std::span<double>(x.data() + kRegisters, packed_size(cfg_.window)));
    }
    return x;
  }

  /// Static-frame voltage applied by the current loop at (t, x).
  DriveOutput drive(double t, const State& x) const {
    const double omega = cfg_.profile.eval(t).omega;
    const UnitCircle rotor(vec2(x, kRotor));
    const Vec2 i_ref = to_static_frame(rotor, cfg_.current_ref_dq);
    return drive_voltage(vec2(x, kCurrent), i_ref, rotor, omega, vec2(x, kLoop), cfg_.machine,
                         cfg_.loop);
  }

  State flow(double t, const State& x) const {
    State dx = State::Zero(x.size());
    const double omega = cfg_.profile.eval(t).omega;
    const PlantState plant = plant_of(x);
    const DriveOutput u = drive(t, x);
    const PlantDerivative dp = plant_flow(plant, u.voltage, omega, cfg_.machine);
    set_vec2(dx, kCurrent, dp.current);
    set_vec2(dx, kRotor, dp.rotor);
    set_vec2(dx, kLoop, u.integral_rate);

    const ObserverState obs = observer_of(x);
    const Vec2 i_meas = to_rotating_frame(obs.frame, plant.current);
    const Vec2 u_meas = to_rotating_frame(obs.frame, u.voltage);
    const ObserverDerivative d = ct_observer_flow(obs, i_meas, u_meas, cfg_.machine, cfg_.gains);
    set_vec2(dx, kIHat, d.i_hat);
    set_vec2(dx, kHHat, d.h_hat);
    set_vec2(dx, kFrame, d.frame);
    dx[kXiHat] = d.xi_hat;
    dx[kRho] = cfg_.variant == Variant::continuous ? 0.0 : cfg_.gains.clock_rate;

    if (identifier_active()) {
      Vec2 nu_rate;
      if (cfg_.regressor == RegressorSource::exact) {
        const ChiQuantities q = chi_quantities(omega, 0.0, plant.rotor, cfg_.machine);
        nu_rate = q.chi * q.frame.vec();
      } else {
        nu_rate = ident_flow(obs.frame, obs.h_hat);
      }
      set_vec2(dx, kRegisters, nu_rate);
    }
    return dx;
  }

  bool in_jump_set(double, const State& x) const {
    return cfg_.variant != Variant::continuous && Clock::expired(x[kRho]);
  }

  State jump(double t, const State& x) const {
    State xp = x;
    const ObserverState obs = observer_of(x);
    const UnitCircle next_frame = jump_zeta(obs.h_hat, obs.frame);
    const Mat2 gf = group_mul(next_frame.inverse(), obs.frame).matrix();

    double xi_next = obs.xi_hat;
    if (identifier_active()) {
      IdentifierRegisters regs = registers_of(x);
      std::optional<double> estimate;
      if (regs.ready()) {
        const XiEstimate e = solve_xi_star(make_batch(regs), cfg_.degeneracy_floor);
        if (!e.degenerate) estimate = e.value;
      }
      xi_next = xi_jump_policy(obs.xi_hat, estimate, regs.jumps, cfg_.window, cfg_.gains.gamma);

      if (cfg_.regressor == RegressorSource::exact) {
        const double omega = cfg_.profile.eval(t).omega;
        const ChiQuantities q =
            chi_quantities(omega, 0.0, UnitCircle(vec2(x, kRotor)), cfg_.machine);
        regs = ident_jump(std::move(regs), q.frame, Vec2(0.0, -q.chi));
      } else {
        regs = ident_jump(std::move(regs), obs.frame, obs.h_hat);
      }
      pack(regs, std::span<double>(xp.data() + kRegisters, packed_size(cfg_.window)));
      xp[kXiStarValid] = 0.0;
      if (regs.ready()) {
        const XiEstimate e = solve_xi_star(make_batch(regs), cfg_.degeneracy_floor);
        xp[kXiStar] = e.value;
        xp[kXiStarValid] = e.degenerate ? 0.0 : 1.0;
      }
    }

    set_vec2(xp, kIHat, gf * obs.i_hat);
    set_vec2(xp, kHHat, gf * obs.h_hat);
    set_vec2(xp, kFrame, next_frame.vec());
    xp[kXiHat] = xi_next;
    xp[kRho] = 0.0;
    return xp;
  }

  void project(State& x) const {
    set_vec2(x, kRotor, vec2(x, kRotor).normalized());
    set_vec2(x, kFrame, vec2(x, kFrame).normalized());
  }

  void snap_to_jump_set(State& x) const {
    if (cfg_.variant != Variant::continuous) x[kRho] = 1.0;
  }

  /// Everything derived from one joint state.
  struct Outputs {
    double omega;
    double omega_rate;
    ChiQuantities chi;
    Vec2 voltage;
    Vec2 current_in_frame;
    ErrorState error;
    MatrosovValues matrosov;
    double sigma;
    PhysicalEstimates estimates;
  };

  Outputs observe(double t, const State& x, FluxSaturation sat,
                  bool omega_includes_k_eta = false) const {
    Outputs o;
    const SpeedSample s = cfg_.profile.eval(t);
    o.omega = s.omega;
    o.omega_rate = s.omega_rate;
    const PlantState plant = plant_of(x);
    o.chi = chi_quantities(s.omega, s.omega_rate, plant.rotor, cfg_.machine);
    o.voltage = drive(t, x).voltage;
    const ObserverState obs = observer_of(x);
    o.current_in_frame = to_rotating_frame(obs.frame, plant.current);
    o.error = error_coords(o.current_in_frame, o.chi.chi, o.chi.frame, o.chi.xi, obs, cfg_.machine,
                           cfg_.gains);
    const double rho = cfg_.variant == Variant::continuous ? 0.0 : obs.rho;
    o.matrosov = matrosov_eval(o.error.eta, o.error.xi_err, rho, o.chi.chi, cfg_.gains);
    o.sigma = sigma_s(o.error.eta, o.error.xi_err, rho);
    o.estimates = physical_estimates(obs, sat, cfg_.gains, omega_includes_k_eta);
    return o;
  }

 private:
  CoSimConfig cfg_;
};

}  // namespace hpmsm
