#pragma once

// Auxiliary functions for the stability analysis of the reduced hybrid
// system, evaluated at (eta, xi_err, rho, chi).

#include <cmath>

#include "hpmsm/circle.hpp"
#include "hpmsm/observer.hpp"

namespace hpmsm {

struct MatrosovValues {
  double w1;
  double w2;
  double w3;
  double w4;
};

/**
 * W1 = 1 - eta_1 + xi_err^2 / (2 gamma)
 * W2 = -chi xi_err eta_1 eta_2
 * W3 = exp(rho) (eta_2^2 + xi_err^2)
 * W4 = exp(-rho) (1 - eta_1)
 */
inline MatrosovValues matrosov_eval(const UnitCircle& eta, double xi_err, double rho, double chi,
                                    const ObserverGains& g) {
  const double e1 = eta.c();
  const double e2 = eta.s();
  return {1.0 - e1 + xi_err * xi_err / (2.0 * g.gamma), -chi * xi_err * e1 * e2,
          std::exp(rho) * (e2 * e2 + xi_err * xi_err), std::exp(-rho) * (1.0 - e1)};
}

/// Proper indicator of {eta = (1, 0), xi_err = 0} x [0, 1]:
/// sqrt((1 - eta_1)^2 + eta_2^2 + xi_err^2).
inline double sigma_s(const UnitCircle& eta, double xi_err, double /*rho*/ = 0.0) {
  const double a = 1.0 - eta.c();
  return std::sqrt(a * a + eta.s() * eta.s() + xi_err * xi_err);
}

}  // namespace hpmsm
