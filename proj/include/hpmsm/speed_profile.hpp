#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpmsm/plant.hpp"

namespace hpmsm {

/// Raised when a profile would violate the constant-sign, bounded-speed,
/// bounded-acceleration requirements on omega.
class ProfileError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SpeedSegment {
  enum class Kind { constant, ramp, chirp };

  Kind kind = Kind::constant;
  double duration = 0.0;   // s
  double target = 0.0;     // ramp end value, rad/s (signed)
  double amplitude = 0.0;  // chirp amplitude, rad/s
  double f_start = 0.0;    // chirp start frequency, Hz
  double f_end = 0.0;      // chirp end frequency, Hz

  static SpeedSegment constant(double duration) { return {Kind::constant, duration}; }
  static SpeedSegment ramp(double duration, double target) {
    return {Kind::ramp, duration, target};
  }
  static SpeedSegment chirp(double duration, double amplitude, double f_start, double f_end) {
    return {Kind::chirp, duration, 0.0, amplitude, f_start, f_end};
  }
};

struct SpeedBounds {
  double omega_min;  // rad/s, > 0
  double omega_max;  // rad/s
  double accel_max;  // M, rad/s^2
};

struct SpeedSample {
  double omega;       // rad/s
  double omega_rate;  // right derivative, rad/s^2
};

/**
 * Piecewise speed profile: an initial value followed by constant, linear
 * ramp and sinusoidal chirp pieces. The profile is continuous by
 * construction (every piece starts where the previous one ended) and holds
 * its final value after the last piece.
 *
 * The constructor checks the bounds analytically per piece; for chirps the
 * check uses the full +/- amplitude envelope, so it is conservative.
 */
class SpeedProfile {
 public:
  SpeedProfile(double omega0, std::vector<SpeedSegment> segments, SpeedBounds bounds)
      : omega0_(omega0), segments_(std::move(segments)), bounds_(bounds) {
    build();
  }

  /// Constant speed forever.
  static SpeedProfile constant(double omega, SpeedBounds bounds) { return {omega, {}, bounds}; }

  SpeedSample eval(double t) const {
    if (t < 0.0) throw std::invalid_argument("SpeedProfile::eval: t must be non-negative");
    auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
    const std::size_t idx = static_cast<std::size_t>(it - starts_.begin());
    if (idx == 0) return {omega0_, 0.0};
    const std::size_t k = idx - 1;
    const SpeedSegment& seg = segments_[k];
    const double tau = t - starts_[k];
    if (k + 1 == segments_.size() && tau >= seg.duration) {
      // past the end of the last piece
      return {start_values_.back(), 0.0};
    }
    return eval_piece(seg, start_values_[k], std::min(tau, seg.duration));
  }

  double sign() const { return sign_of(omega0_); }
  const SpeedBounds& bounds() const { return bounds_; }
  double total_duration() const { return starts_.empty() ? 0.0 : end_time_; }
  const std::vector<SpeedSegment>& segments() const { return segments_; }
  double initial() const { return omega0_; }

 private:
  static SpeedSample eval_piece(const SpeedSegment& seg, double w0, double tau) {
    switch (seg.kind) {
      case SpeedSegment::Kind::constant:
        return {w0, 0.0};
      case SpeedSegment::Kind::ramp: {
        const double slope = (seg.target - w0) / seg.duration;
        return {w0 + slope * tau, slope};
      }
      case SpeedSegment::Kind::chirp: {
        const double two_pi = 2.0 * std::numbers::pi;
        const double df = (seg.f_end - seg.f_start) / seg.duration;
        const double phase = two_pi * (seg.f_start * tau + 0.5 * df * tau * tau);
        const double phase_rate = two_pi * (seg.f_start + df * tau);
        return {w0 + seg.amplitude * std::sin(phase),
                seg.amplitude * std::cos(phase) * phase_rate};
      }
    }
    return {w0, 0.0};
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ProfileError("speed profile rejected: " + what +
                       " (speed must keep a constant sign with omega_min <= |omega| <= "
                       "omega_max and |domega/dt| <= M)");
  }

  void check_level(double w, std::size_t k) const {
    std::ostringstream os;
    if (sign_of(w) != sign() || w == 0.0) {
      os << "piece " << k << " changes the sign of the speed";
      fail(os.str());
    }
    if (std::abs(w) < bounds_.omega_min) {
      os << "piece " << k << " reaches |omega| = " << std::abs(w) << " < omega_min";
      fail(os.str());
    }
    if (std::abs(w) > bounds_.omega_max) {
      os << "piece " << k << " reaches |omega| = " << std::abs(w) << " > omega_max";
      fail(os.str());
    }
  }

  void check_rate(double r, std::size_t k) const {
    if (std::abs(r) > bounds_.accel_max) {
      std::ostringstream os;
      os << "piece " << k << " has |domega/dt| up to " << std::abs(r) << " > M";
      fail(os.str());
    }
  }

  void build() {
    if (!(bounds_.omega_min > 0.0) || !(bounds_.omega_max >= bounds_.omega_min) ||
        !(bounds_.accel_max >= 0.0)) {
      fail("bounds must satisfy 0 < omega_min <= omega_max and M >= 0");
    }
    if (!std::isfinite(omega0_)) fail("initial speed not finite");
    check_level(omega0_, 0);
    double t = 0.0;
    double w = omega0_;
    for (std::size_t k = 0; k < segments_.size(); ++k) {
      const SpeedSegment& seg = segments_[k];
      if (!(seg.duration > 0.0) || !std::isfinite(seg.duration)) {
        fail("piece " + std::to_string(k) + " has non-positive duration");
      }
      starts_.push_back(t);
      start_values_.push_back(w);
      switch (seg.kind) {
        case SpeedSegment::Kind::constant:
          break;
        case SpeedSegment::Kind::ramp:
          check_level(seg.target, k);
          check_rate((seg.target - w) / seg.duration, k);
          break;
        case SpeedSegment::Kind::chirp: {
          if (seg.f_start < 0.0 || seg.f_end < 0.0) fail("chirp frequencies must be >= 0");
          check_level(w + std::abs(seg.amplitude), k);
          check_level(w - std::abs(seg.amplitude), k);
          const double f_max = std::max(seg.f_start, seg.f_end);
          check_rate(2.0 * std::numbers::pi * std::abs(seg.amplitude) * f_max, k);
          break;
        }
      }
      w = eval_piece(seg, w, seg.duration).omega;
      t += seg.duration;
    }
    end_time_ = t;
    start_values_.push_back(w);
  }

  double omega0_;
  std::vector<SpeedSegment> segments_;
  SpeedBounds bounds_;
  std::vector<double> starts_;
  std::vector<double> start_values_;  // one extra entry: the final value
  double end_time_ = 0.0;
};

/// Default bounds for a nominal electrical speed.
inline SpeedBounds default_speed_bounds(double omega_nominal) {
  const double w = std::abs(omega_nominal);
  return {0.1 * w, 1.5 * w, 2.0e5};
}

/**
 * Two seconds: constant nominal speed, a ramp down to half speed, a chirp
 * around half speed, a ramp back up and a final constant stretch.
 */
inline SpeedProfile default_speed_profile(double omega_nominal) {
  const double w = omega_nominal;
  std::vector<SpeedSegment> segs = {
      SpeedSegment::constant(0.6),
      SpeedSegment::ramp(0.1, 0.5 * w),
      SpeedSegment::constant(0.2),
      SpeedSegment::chirp(0.4, 0.3 * w, 2.0, 10.0),
      SpeedSegment::ramp(0.2, w),
      SpeedSegment::constant(0.5),
  };
  return {w, std::move(segs), default_speed_bounds(w)};
}

}  // namespace hpmsm
