#pragma once

/// Brute-force feasibility oracle for the scalar (n = 1) case of the
/// Theta LMI, used to cross-check the sdp-based path. Deliberately built on
/// nothing but direct grid search and leading-principal-minor tests, so the
/// two routes share no code.
///
/// By homogeneity P1 is normalized to 1; (P2, P3) scan [-10, 10]^2 and Q
/// scans a log-spaced grid in (0, 10].

#include <cmath>
#include <vector>

namespace delaycert {

struct ScalarThetaInstance {
  double M = -1.0;
  double N = 0.0;
  double D0 = 1.0;
  double kappa = 0.0;
};

namespace detail {

// Theta < 0 iff -Theta > 0 iff all leading principal minors of -Theta positive.
inline bool scalar_theta_negative_definite(const ScalarThetaInstance& sys, double delta,
                                           double p1, double p2, double p3, double q) {
  const double a11 = 2.0 * sys.kappa * p1 + 2.0 * sys.M * p2;
  const double a12 = p1 - p2 + sys.M * p3;
  const double a13 = delta * p2 * sys.N;
  const double a22 = -2.0 * p3 + 2.0 * delta * q;
  const double a23 = delta * p3 * sys.N;
  const double a33 = -delta * std::exp(-2.0 * sys.kappa * sys.D0) * q;
  const double m1 = -a11;
  if (!(m1 > 0.0)) return false;
  const double m2 = a11 * a22 - a12 * a12;  // det of leading 2x2 of -Theta
  if (!(m2 > 0.0)) return false;
  const double det3 = a11 * (a22 * a33 - a23 * a23) - a12 * (a12 * a33 - a23 * a13) +
                      a13 * (a12 * a23 - a22 * a13);
  return -det3 > 0.0;
}

}  // namespace detail

/// True when some grid point certifies Theta(delta, kappa) < 0.
inline bool scalar_bruteforce_feasible(const ScalarThetaInstance& sys, double delta,
                                       int p_steps = 81, int q_steps = 49) {
  const double p1 = 1.0;
  std::vector<double> qs(q_steps);
  for (int i = 0; i < q_steps; ++i)
    qs[i] = std::pow(10.0, -4.0 + 5.0 * double(i) / double(q_steps - 1));  // (1e-4, 10]
  for (int ip2 = 0; ip2 < p_steps; ++ip2) {
    const double p2 = -10.0 + 20.0 * double(ip2) / double(p_steps - 1);
    for (int ip3 = 0; ip3 < p_steps; ++ip3) {
      const double p3 = -10.0 + 20.0 * double(ip3) / double(p_steps - 1);
      for (const double q : qs)
        if (detail::scalar_theta_negative_definite(sys, delta, p1, p2, p3, q)) return true;
    }
  }
  return false;
}

}  // namespace delaycert
