#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "delaycert/modal_pde.hpp"

using namespace delaycert;
using Catch::Approx;

namespace {

const ReactionDiffusionConfig kCfg{};  // a = c = 0.5, L = 2 pi

double cubic_profile(double x) {
  const double L = kCfg.L;
  return -x * (2.0 * L / 3.0 - x) * (L - x);
}

// Sturm-sequence bisection for the k-th largest eigenvalue of a symmetric
// tridiagonal matrix (diag d, off-diagonal e). Independent of any dense
// eigensolver.
int count_eigs_below(const std::vector<double>& d, const std::vector<double>& e, double x) {
  int count = 0;
  double q = d[0] - x;
  if (q < 0) ++count;
  for (std::size_t i = 1; i < d.size(); ++i) {
    const double denom = (std::abs(q) < 1e-300) ? ((q < 0) ? -1e-300 : 1e-300) : q;
    q = d[i] - x - e[i - 1] * e[i - 1] / denom;
    if (q < 0) ++count;
  }
  return count;
}

double kth_largest_eig(const std::vector<double>& d, const std::vector<double>& e, int k) {
  const int n = int(d.size());
  double lo = -1e9, hi = 1e9;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    // eigenvalues strictly above mid: n - count_below(mid)
    if (n - count_eigs_below(d, e, mid) >= k)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// least squares decay rate of log|values| using strictly positive samples
double positive_fit_rate(const std::vector<double>& ts, const std::vector<double>& vs,
                         double t0, double t1) {
  double st = 0, sy = 0, stt = 0, sty = 0;
  int n = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i] < t0 || ts[i] > t1 || !(vs[i] > 1e-300)) continue;
    const double y = std::log(vs[i]);
    st += ts[i];
    sy += y;
    stt += ts[i] * ts[i];
    sty += ts[i] * y;
    ++n;
  }
  REQUIRE(n >= 10);
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  return -slope;
}

}  // namespace

TEST_CASE("reaction-diffusion eigenvalues") {
  REQUIRE(eigenvalue(kCfg, 1) == 0.375);
  REQUIRE(eigenvalue(kCfg, 2) == 0.0);
  REQUIRE(eigenvalue(kCfg, 3) == -0.625);
  REQUIRE(eigenvalue(kCfg, 4) == -1.5);
}

TEST_CASE("boundary input coefficients") {
  const auto [b11, b12] = input_coefficients(kCfg, 1);
  REQUIRE(b11 == Approx(0.5 * M_PI * std::sqrt(2.0 / std::pow(2.0 * M_PI, 3))).epsilon(1e-14));
  REQUIRE(b11 == b12);
  for (int n = 1; n <= 8; ++n) {
    const auto [b1, b2] = input_coefficients(kCfg, n);
    REQUIRE(std::abs(b1) == Approx(std::abs(b2)));
  }
  const auto [b21, b22] = input_coefficients(kCfg, 2);
  REQUIRE(b22 == -b21);
}

TEST_CASE("truncated matrices and Kalman rank") {
  const auto [A, B] = truncated_matrices(kCfg, 3);
  REQUIRE(A.rows() == 3);
  REQUIRE(B.cols() == 2);
  REQUIRE(A(0, 0) == 0.375);
  REQUIRE(A(1, 1) == 0.0);
  REQUIRE(A(2, 2) == -0.625);
  REQUIRE((A - RealMatrix(A.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(controllability_rank(A, B) == 3);

  const auto [A1, B1] = truncated_matrices(kCfg, 1);
  REQUIRE(A1.rows() == 1);
  REQUIRE(B1.rows() == 1);
  REQUIRE(B1.cols() == 2);
}

TEST_CASE("spectral gap") {
  REQUIRE(spectral_gap(kCfg, 3) == Approx(1.5));
  REQUIRE(spectral_gap(kCfg, 2) == Approx(0.625));
  ReactionDiffusionConfig hot = kCfg;
  hot.c = 5.0;  // lambda_2 = 5 - 0.5 = 4.5 > 0
  REQUIRE_THROWS_AS(spectral_gap(hot, 1), AssumptionError);
}

TEST_CASE("spectral system construction and validation") {
  const auto sys = make_reaction_diffusion_system(kCfg, 3, 10);
  REQUIRE(sys.alpha == Approx(1.5));
  REQUIRE(sys.is_real());
  REQUIRE(sys.riesz_lower == 1.0);
  REQUIRE(sys.riesz_upper == 1.0);

  SpectralSystem bad = sys;
  bad.alpha = 2.0;  // claims a gap the fourth mode does not satisfy
  REQUIRE_THROWS_AS(bad.validate(), AssumptionError);
}

TEST_CASE("modal projection of initial profiles") {
  const auto e1 = project_initial(kCfg, [](double x) { return eigenfunction(kCfg, 1, x); }, 6);
  REQUIRE(e1(0) == Approx(1.0).margin(1e-10));
  for (int n = 1; n < 6; ++n) REQUIRE(std::abs(e1(n)) < 1e-10);

  const auto zero = project_initial(kCfg, [](double) { return 0.0; }, 4);
  REQUIRE(zero.cwiseAbs().maxCoeff() == 0.0);

  const auto coarse = project_initial(kCfg, cubic_profile, 10, 4001);
  const auto fine = project_initial(kCfg, cubic_profile, 10, 40001);
  for (int n = 0; n < 10; ++n)
    REQUIRE(coarse(n) == Approx(fine(n)).epsilon(1e-8));
}

TEST_CASE("eigenstructure matches a finite-difference oracle") {
  const int pts = 2000;
  const double dx = kCfg.L / double(pts + 1);
  std::vector<double> d(pts, kCfg.c - 2.0 * kCfg.a / (dx * dx));
  std::vector<double> e(pts - 1, kCfg.a / (dx * dx));
  for (int k = 1; k <= 4; ++k) {
    const double fd = kth_largest_eig(d, e, k);
    const double exact = eigenvalue(kCfg, k);
    REQUIRE(std::abs(fd - exact) <= 0.005 * std::max(std::abs(exact), 0.05));
  }
}

TEST_CASE("zero initial profile stays identically zero") {
  const auto [A0, B0] = truncated_matrices(kCfg, 3);
  const RealMatrix K = place_poles(A0, B0, {{-0.75, 0}, {-1.0, 0}, {-1.25, 0}});
  const auto traj = simulate_pde_closed_loop(kCfg, 3, 10, K, 1.0,
                                             DelaySignal::constant(1.0), {0.5},
                                             [](double) { return 0.0; }, 5.0, 0.01);
  REQUIRE(traj.coeffs.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(traj.u.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(traj.field.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("residual stable mode evolves freely under zero gain") {
  const RealMatrix K = RealMatrix::Zero(2, 3);
  const auto traj = simulate_pde_closed_loop(kCfg, 3, 8, K, 1.0,
                                             DelaySignal::constant(1.0), {0.5},
                                             [](double x) { return eigenfunction(kCfg, 5, x); },
                                             4.0, 0.01);
  const double lam5 = eigenvalue(kCfg, 5);
  for (std::size_t k = 0; k < traj.times.size(); k += 50) {
    const double expected = std::exp(lam5 * traj.times[k]) * traj.coeffs(4, 0);
    REQUIRE(traj.coeffs(4, k) == Approx(expected).margin(1e-9));
    for (int n = 0; n < 8; ++n)
      if (n != 4) REQUIRE(std::abs(traj.coeffs(n, k)) < 1e-12);
  }
}

TEST_CASE("modal truncation consistency with the finite-dimensional loop") {
  const auto [A0, B0] = truncated_matrices(kCfg, 3);
  const RealMatrix K = place_poles(A0, B0, {{-0.75, 0}, {-1.0, 0}, {-1.25, 0}});
  const auto delay = DelaySignal::sinusoid(1.0, 0.25, 3.0 * M_PI, M_PI / 4.0);
  const double T = 8.0, h = 0.01;

  const auto pde = simulate_pde_closed_loop(kCfg, 3, 3, K, 1.0, delay, {0.5},
                                            cubic_profile, T, h);
  const RealVector y0 = project_initial(kCfg, cubic_profile, 3);
  const auto lti = simulate_closed_loop(A0, B0, K, 1.0, delay, {0.5}, y0, T, h);

  REQUIRE((pde.coeffs - lti.x).cwiseAbs().maxCoeff() <= 1e-12);
  REQUIRE((pde.u - lti.u).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("closed-loop decay meets the certified rate") {
  const auto [A0, B0] = truncated_matrices(kCfg, 3);
  const RealMatrix K = place_poles(A0, B0, {{-0.75, 0}, {-1.0, 0}, {-1.25, 0}});
  const auto delay = DelaySignal::sinusoid(1.0, 0.25, 3.0 * M_PI, M_PI / 4.0);
  const auto traj = simulate_pde_closed_loop(kCfg, 3, 10, K, 1.0, delay, {0.5},
                                             cubic_profile, 40.0, 0.01);
  const auto series = traj.truncated_norm_series(3);
  const auto fit = fit_decay_series(traj.times, series, 10.0, 40.0);
  REQUIRE(fit.rate >= 0.19);

  // residual modes keep at least 0.9 min(-lambda_n, eta)
  const double eta = decay_rate_eta(0.2, spectral_gap(kCfg, 3));
  for (int n = 4; n <= 10; ++n) {
    std::vector<double> mags(traj.times.size());
    for (std::size_t k = 0; k < traj.times.size(); ++k)
      mags[k] = std::abs(traj.coeffs(n - 1, k));
    const double rate = positive_fit_rate(traj.times, mags, 10.0, 40.0);
    REQUIRE(rate >= 0.9 * std::min(-eigenvalue(kCfg, n), eta));
  }
}

TEST_CASE("Parseval consistency of the reconstructed field") {
  const auto [A0, B0] = truncated_matrices(kCfg, 3);
  const RealMatrix K = place_poles(A0, B0, {{-0.75, 0}, {-1.0, 0}, {-1.25, 0}});
  const auto traj = simulate_pde_closed_loop(kCfg, 3, 10, K, 1.0,
                                             DelaySignal::sinusoid(1.0, 0.25, 3.0 * M_PI, M_PI / 4.0),
                                             {0.5}, cubic_profile, 6.0, 0.01);
  const double dx = traj.x_grid(1) - traj.x_grid(0);
  for (std::size_t k = 0; k < traj.times.size(); k += 120) {
    double quad = 0.0;
    for (Eigen::Index i = 0; i + 1 < traj.x_grid.size(); ++i) {
      const double f0 = traj.field(i, k), f1 = traj.field(i + 1, k);
      quad += 0.5 * dx * (f0 * f0 + f1 * f1);
    }
    const double l2_grid = std::sqrt(quad);
    const double l2_modal = traj.coeffs.col(k).norm();
    if (l2_modal < 1e-9) continue;
    REQUIRE(l2_grid == Approx(l2_modal).epsilon(0.02));
  }
}

TEST_CASE("pde certification window and monotonicity in kappa") {
  const auto [A0, B0] = truncated_matrices(kCfg, 3);
  const RealMatrix K = place_poles(A0, B0, {{-0.75, 0}, {-1.0, 0}, {-1.25, 0}});
  const auto res = certify_pde(kCfg, 3, K, 1.0, 0.2, 1e-3);
  REQUIRE(res.delta >= 0.20);
  REQUIRE(res.delta <= 0.32);
  const auto res0 = certify_pde(kCfg, 3, K, 1.0, 0.0, 1e-3);
  REQUIRE(res0.delta >= res.delta - 1e-3);

  REQUIRE_THROWS_AS(certify_pde(kCfg, 3, RealMatrix::Zero(2, 3), 1.0, 0.2),
                    PreconditionError);
}

TEST_CASE("generic spectral certification through the realified path") {
  // complex diagonal data whose realification matches a hand-built real system
  SpectralSystem sys;
  sys.N0 = 1;
  sys.N_sim = 1;
  sys.eigenvalues.resize(1);
  sys.eigenvalues(0) = std::complex<double>(0.1, 1.0);
  sys.input_coeffs.resize(1, 1);
  sys.input_coeffs(0, 0) = 1.0;
  sys.alpha = 0.0;
  ComplexMatrix K(1, 1);
  K(0, 0) = std::complex<double>(-1.1, -1.0);  // closed loop at -1
  const auto res = certify_spectral(sys, K, 1.0, 0.1, 1e-2);
  REQUIRE(res.delta > 0.0);
}

TEST_CASE("modal and field csv output") {
  const auto [A0, B0] = truncated_matrices(kCfg, 3);
  const RealMatrix K = place_poles(A0, B0, {{-0.75, 0}, {-1.0, 0}, {-1.25, 0}});
  const auto traj = simulate_pde_closed_loop(kCfg, 3, 5, K, 1.0,
                                             DelaySignal::constant(1.0), {0.5},
                                             cubic_profile, 1.0, 0.01, 41);
  write_modal_csv("/tmp/delaycert_modal.csv", traj);
  write_field_csv("/tmp/delaycert_field.csv", traj, 10);
  std::ifstream fm("/tmp/delaycert_modal.csv");
  std::string header;
  std::getline(fm, header);
  REQUIRE(header == "t,c_1,c_2,c_3,c_4,c_5,utilde_1,utilde_2");
  std::ifstream ff("/tmp/delaycert_field.csv");
  std::getline(ff, header);
  REQUIRE(header == "t,x,y");
}
