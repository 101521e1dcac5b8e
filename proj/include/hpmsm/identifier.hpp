#pragma once

/**
 * \file identifier.hpp
 *
 * Mini-batch least-squares identifier of xi = sgn(omega)/phi.
 *
 * Over one clock period T = 1/Lambda the chi-frame satisfies
 *
 *   chi(t-T) y(t) - chi(t) y(t-T) = xi chi(t-T) chi(t) J int_{t-T}^{t} y ds,
 *
 * with y = chi zeta_chi. Estimates replace the unknowns: y by
 * C[zeta_hat] J h_hat and chi by |h_hat|. Shift registers sampled at clock
 * jumps hold the last N + 1 values of y (Y) and chi (Z) and the last N
 * right-hand-side regressors (Phi); nu integrates y between jumps.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "hpmsm/circle.hpp"

namespace hpmsm {

/**
 * Register slot k of Y and Z holds the sample taken N - k jumps ago (slot N
 * is the most recent). Phi slot k (k = 1..N) is stored at index k - 1 and
 * pairs the samples of Y/Z slots k - 1 and k.
 */
struct IdentifierRegisters {
  std::size_t window = 2;  // N
  Vec2 nu = Vec2::Zero();
  std::vector<Vec2> y;      // N + 1 entries, V
  std::vector<double> z;    // N + 1 entries, V
  std::vector<Vec2> phi;    // N entries
  std::size_t y_filled = 0;    // valid Y/Z slots, counted from the tail
  std::size_t phi_filled = 0;  // valid Phi slots, counted from the tail
  std::size_t jumps = 0;

  explicit IdentifierRegisters(std::size_t n = 2)
      : window(n), y(n + 1, Vec2::Zero()), z(n + 1, 0.0), phi(n, Vec2::Zero()) {
    if (n < 1) throw std::invalid_argument("identifier window N must be >= 1");
  }

  /// Enough samples for a full batch of N regressions.
  bool ready() const { return y_filled >= window + 1; }
};

/// nu' = C[zeta_hat] J h_hat; the registers do not flow.
inline Vec2 ident_flow(const UnitCircle& frame, const Vec2& h_hat) {
  return rotate(frame, skew_mul(h_hat));
}

/// Register update at a clock jump. Uses the pre-jump frame and back-EMF
/// estimate; the new Phi tail is formed with the previous Z tail, before
/// the shift.
inline IdentifierRegisters ident_jump(IdentifierRegisters r, const UnitCircle& frame,
                                      const Vec2& h_hat) {
  const std::size_t n = r.window;
  const Vec2 y_new = rotate(frame, skew_mul(h_hat));
  const double z_new = h_hat.norm();
  const bool have_previous = r.y_filled >= 1;
  const Vec2 phi_new = have_previous ? Vec2(skew_mul(r.nu) * (z_new * r.z[n])) : Vec2::Zero();

  for (std::size_t i = 0; i < n; ++i) {
    r.y[i] = r.y[i + 1];
    r.z[i] = r.z[i + 1];
  }
  r.y[n] = y_new;
  r.z[n] = z_new;
  r.y_filled = std::min(r.y_filled + 1, n + 1);

  if (have_previous) {
    for (std::size_t i = 0; i + 1 < n; ++i) r.phi[i] = r.phi[i + 1];
    r.phi[n - 1] = phi_new;
    r.phi_filled = std::min(r.phi_filled + 1, n);
  }
  r.nu = Vec2::Zero();
  ++r.jumps;
  return r;
}

/// Stacked regression tau_N(X) = tau_N(Phi) xi.
struct RegressionBatch {
  Eigen::VectorXd x;    // 2N
  Eigen::VectorXd phi;  // 2N
  double phi_energy = 0.0;  // sum |Phi_i|^2
};

inline RegressionBatch make_batch(const IdentifierRegisters& r) {
  if (!r.ready()) throw std::logic_error("identifier batch requested before the registers filled");
  const std::size_t n = r.window;
  RegressionBatch b;
  b.x.resize(2 * n);
  b.phi.resize(2 * n);
  for (std::size_t i = 1; i <= n; ++i) {
    const Vec2 xi = r.z[i - 1] * r.y[i] - r.z[i] * r.y[i - 1];
    b.x.segment<2>(2 * (i - 1)) = xi;
    b.phi.segment<2>(2 * (i - 1)) = r.phi[i - 1];
  }
  b.phi_energy = b.phi.squaredNorm();
  return b;
}

struct XiEstimate {
  double value;     // least-squares minimizer (0 for an all-zero Phi)
  bool degenerate;  // phi_energy below the floor: do not use
};

/// Scalar least squares: argmin |X - Phi theta|^2 = Phi.X / |Phi|^2.
inline XiEstimate solve_xi_star(const RegressionBatch& b, double floor = 1e-12) {
  const double e = b.phi_energy;
  const double value = e > 0.0 ? b.phi.dot(b.x) / e : 0.0;
  return {value, !(e >= floor)};
}

/**
 * xi_hat is replaced by xi_star only when the registers have been ready for
 * more than one period (j > N + 1), an estimate is available and it differs
 * from xi_hat by more than 4 sqrt(gamma).
 */
inline double xi_jump_policy(double xi_hat, std::optional<double> xi_star, std::size_t j,
                             std::size_t window, double gamma) {
  if (j <= window + 1 || !xi_star) return xi_hat;
  if (std::abs(xi_hat - *xi_star) <= 4.0 * std::sqrt(gamma)) return xi_hat;
  return *xi_star;
}

// Flat storage of the registers inside a simulation state vector.

inline std::size_t packed_size(std::size_t n) { return 2 + 2 * (n + 1) + (n + 1) + 2 * n + 3; }

inline void pack(const IdentifierRegisters& r, std::span<double> out) {
  if (out.size() != packed_size(r.window)) throw std::invalid_argument("pack: size mismatch");
  std::size_t k = 0;
  out[k++] = r.nu.x();
  out[k++] = r.nu.y();
  for (const auto& v : r.y) {
    out[k++] = v.x();
    out[k++] = v.y();
  }
  for (double v : r.z) out[k++] = v;
  for (const auto& v : r.phi) {
    out[k++] = v.x();
    out[k++] = v.y();
  }
  out[k++] = static_cast<double>(r.y_filled);
  out[k++] = static_cast<double>(r.phi_filled);
  out[k++] = static_cast<double>(r.jumps);
}

inline IdentifierRegisters unpack(std::span<const double> in, std::size_t n) {
  if (in.size() != packed_size(n)) throw std::invalid_argument("unpack: size mismatch");
  IdentifierRegisters r(n);
  std::size_t k = 0;
  r.nu = Vec2(in[0], in[1]);
  k = 2;
  for (auto& v : r.y) {
    v = Vec2(in[k], in[k + 1]);
    k += 2;
  }
  for (double& v : r.z) v = in[k++];
  for (auto& v : r.phi) {
    v = Vec2(in[k], in[k + 1]);
    k += 2;
  }
  r.y_filled = static_cast<std::size_t>(std::lround(in[k++]));
  r.phi_filled = static_cast<std::size_t>(std::lround(in[k++]));
  r.jumps = static_cast<std::size_t>(std::lround(in[k++]));
  return r;
}

}  // namespace hpmsm
