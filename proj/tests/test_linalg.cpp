#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <complex>
#include <random>

#include "delaycert/linalg.hpp"

using namespace delaycert;
using Catch::Approx;

namespace {

Eigen::MatrixXd random_matrix(int n, int m, std::mt19937& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Eigen::MatrixXd out(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out(i, j) = dist(rng);
  return out;
}

Eigen::MatrixXcd random_cmatrix(int n, int m, std::mt19937& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Eigen::MatrixXcd out(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out(i, j) = {dist(rng), dist(rng)};
  return out;
}

}  // namespace

TEST_CASE("mat_exp basics") {
  Eigen::MatrixXd A(2, 2);
  A << 3.0, -1.0, 2.0, 0.5;
  REQUIRE((mat_exp(A, 0.0) - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);

  Eigen::MatrixXd D = Eigen::Vector2d(-1.0, 2.0).asDiagonal();
  const Eigen::MatrixXd E = mat_exp(D, 1.0);
  REQUIRE(E(0, 0) == Approx(std::exp(-1.0)).epsilon(1e-13));
  REQUIRE(E(1, 1) == Approx(std::exp(2.0)).epsilon(1e-13));
  REQUIRE(std::abs(E(0, 1)) < 1e-15);

  // inverse-product identity oracle on the first worked system
  Eigen::MatrixXd A1(2, 2);
  A1 << 0.0, 1.0, -1.0, 1.0;
  const Eigen::MatrixXd P = mat_exp(A1, 1.0) * mat_exp(A1, -1.0);
  REQUIRE(induced_norm2(P - Eigen::MatrixXd::Identity(2, 2)) < 1e-10);

  REQUIRE_THROWS_AS(mat_exp(Eigen::MatrixXd::Zero(2, 3), 1.0), DimensionError);
}

TEST_CASE("mat_exp semigroup property") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + int(trial % 4);
    const Eigen::MatrixXd A = random_matrix(n, n, rng, 2.0);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    const double s = dist(rng), t = dist(rng);
    const Eigen::MatrixXd lhs = mat_exp(A, s) * mat_exp(A, t);
    const Eigen::MatrixXd rhs = mat_exp(A, s + t);
    const double scale = std::max(1.0, induced_norm2(rhs));
    REQUIRE(induced_norm2(lhs - rhs) / scale < 1e-9);
  }
}

TEST_CASE("spectral_abscissa") {
  Eigen::MatrixXd A(2, 2), B(2, 1), K(1, 2);
  A << 0.0, 1.0, -1.0, 1.0;
  B << 0.0, 1.0;
  K << -1.0, -3.0;
  const Eigen::MatrixXd Acl = A + B * K;  // poles -1 +/- j
  REQUIRE(spectral_abscissa(Acl) == Approx(-1.0).margin(1e-10));

  REQUIRE(spectral_abscissa(Eigen::MatrixXd::Zero(1, 1)) == Approx(0.0).margin(1e-15));

  // companion matrix of (s+0.75)(s+1)(s+1.25) = s^3 + 3 s^2 + 2.9375 s + 0.9375
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(3, 3);
  C(0, 1) = 1.0;
  C(1, 2) = 1.0;
  C(2, 0) = -0.9375;
  C(2, 1) = -2.9375;
  C(2, 2) = -3.0;
  REQUIRE(spectral_abscissa(C) == Approx(-0.75).margin(1e-8));
}

TEST_CASE("induced_norm2") {
  REQUIRE(induced_norm2(Eigen::Vector2d(3.0, -5.0).asDiagonal().toDenseMatrix()) ==
          Approx(5.0).epsilon(1e-12));
  Eigen::MatrixXd v(2, 1);
  v << 3.0, 4.0;
  REQUIRE(induced_norm2(v) == Approx(5.0).epsilon(1e-12));

  // randomized lower-bound oracle: sample unit vectors, then polish the best
  // probe with power iterations on A^T A (every iterate stays a lower bound)
  std::mt19937 rng(11);
  const Eigen::MatrixXd A = random_matrix(5, 5, rng);
  const double nrm = induced_norm2(A);
  double best = 0.0;
  Eigen::VectorXd best_x = Eigen::VectorXd::Unit(5, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 10000; ++k) {
    Eigen::VectorXd x(5);
    for (int i = 0; i < 5; ++i) x(i) = g(rng);
    x.normalize();
    const double val = (A * x).norm();
    if (val > best) {
      best = val;
      best_x = x;
    }
  }
  for (int k = 0; k < 200; ++k) {
    best_x = (A.transpose() * (A * best_x)).normalized();
    best = std::max(best, (A * best_x).norm());
  }
  REQUIRE(best <= nrm * (1.0 + 1e-12));
  REQUIRE(nrm - best < 1e-6 * nrm);
  REQUIRE(induced_norm2(A) == Approx(induced_norm2(Eigen::MatrixXd(A.transpose()))).epsilon(1e-10));
}

TEST_CASE("solve_lyapunov_identity") {
  REQUIRE(solve_lyapunov_identity(-Eigen::MatrixXd::Ones(1, 1))(0, 0) == Approx(0.5));

  const Eigen::MatrixXd D = Eigen::Vector2d(-1.0, -2.0).asDiagonal();
  const Eigen::MatrixXd P = solve_lyapunov_identity(D);
  REQUIRE(P(0, 0) == Approx(0.5).epsilon(1e-12));
  REQUIRE(P(1, 1) == Approx(0.25).epsilon(1e-12));

  Eigen::MatrixXd M(2, 2);
  M << 0.0, 1.0, -1.0, -2.0;
  const Eigen::MatrixXd Pm = solve_lyapunov_identity(M);
  const Eigen::MatrixXd residual =
      M.transpose() * Pm + Pm * M + Eigen::MatrixXd::Identity(2, 2);
  REQUIRE(induced_norm2(residual) < 1e-9);

  REQUIRE_THROWS_AS(solve_lyapunov_identity(Eigen::MatrixXd::Identity(2, 2)),
                    PreconditionError);
}

TEST_CASE("lyapunov solution is SPD for random Hurwitz inputs") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + int(trial % 5);
    Eigen::MatrixXd M = random_matrix(n, n, rng, 2.0);
    M -= (spectral_abscissa(M) + 0.3) * Eigen::MatrixXd::Identity(n, n);
    REQUIRE(is_hurwitz(M));
    const Eigen::MatrixXd P = solve_lyapunov_identity(M);
    const auto [lo, hi] = symmetric_extremal_eigs(P);
    REQUIRE(lo > 0.0);
    const Eigen::MatrixXd residual =
        M.transpose() * P + P * M + Eigen::MatrixXd::Identity(n, n);
    REQUIRE(induced_norm2(residual) < 1e-9);
    (void)hi;
  }
}

TEST_CASE("realify") {
  Eigen::MatrixXcd I1(1, 1);
  I1(0, 0) = std::complex<double>(0.0, 1.0);
  Eigen::MatrixXd R = realify(I1);
  Eigen::MatrixXd expected(2, 2);
  expected << 0.0, -1.0, 1.0, 0.0;
  REQUIRE((R - expected).cwiseAbs().maxCoeff() == 0.0);

  std::mt19937 rng(3);
  const Eigen::MatrixXcd M = random_cmatrix(3, 3, rng);
  const Eigen::MatrixXcd N = random_cmatrix(3, 3, rng);

  // real input -> two diagonal copies
  const Eigen::MatrixXcd Mr = M.real().cast<std::complex<double>>();
  const Eigen::MatrixXd Rr = realify(Mr);
  REQUIRE((Rr.topLeftCorner(3, 3) - M.real()).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(Rr.topRightCorner(3, 3).cwiseAbs().maxCoeff() == 0.0);

  // algebra homomorphism
  REQUIRE((realify(M + N) - (realify(M) + realify(N))).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(induced_norm2(realify(M * N) - realify(M) * realify(N)) < 1e-12);

  // spectrum of R(M) = sp(M) union conj(sp(M))
  const Spectrum sm = spectrum(M);
  std::vector<std::complex<double>> both;
  for (Eigen::Index i = 0; i < sm.size(); ++i) {
    both.push_back(sm(i));
    both.push_back(std::conj(sm(i)));
  }
  const Spectrum sr = spectrum(Eigen::MatrixXd(realify(M)));
  auto lex = [](std::complex<double> a, std::complex<double> b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  };
  std::vector<std::complex<double>> srv(sr.data(), sr.data() + sr.size());
  std::sort(srv.begin(), srv.end(), lex);
  std::sort(both.begin(), both.end(), lex);
  for (std::size_t i = 0; i < both.size(); ++i)
    REQUIRE(std::abs(srv[i] - both[i]) < 1e-8);
}

TEST_CASE("controllability_rank") {
  REQUIRE(controllability_rank(Eigen::MatrixXd::Zero(3, 3),
                               Eigen::MatrixXd::Identity(3, 3)) == 3);
  Eigen::MatrixXd A = Eigen::Vector2d(1.0, 2.0).asDiagonal();
  Eigen::MatrixXd B(2, 1);
  B << 1.0, 0.0;
  REQUIRE(controllability_rank(A, B) == 1);
}

TEST_CASE("symmetric_extremal_eigs") {
  const auto [a, b] = symmetric_extremal_eigs(Eigen::Vector2d(1.0, 4.0).asDiagonal());
  REQUIRE(a == Approx(1.0));
  REQUIRE(b == Approx(4.0));

  const auto [c, d] = symmetric_extremal_eigs(Eigen::MatrixXd::Identity(3, 3));
  REQUIRE(c == Approx(1.0));
  REQUIRE(d == Approx(1.0));

  std::mt19937 rng(41);
  const Eigen::MatrixXd R = random_matrix(6, 6, rng);
  const Eigen::MatrixXd S = 0.5 * (R + R.transpose().eval());
  const auto [lo, hi] = symmetric_extremal_eigs(S);
  // full-spectrum oracle
  const Spectrum ev = spectrum(S);
  double olo = 1e300, ohi = -1e300;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    olo = std::min(olo, ev(i).real());
    ohi = std::max(ohi, ev(i).real());
  }
  REQUIRE(lo == Approx(olo).margin(1e-8));
  REQUIRE(hi == Approx(ohi).margin(1e-8));

  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 2.0, 0.0, 1.0;
  REQUIRE_THROWS_AS(symmetric_extremal_eigs(asym), SymmetryError);
}

TEST_CASE("place_poles zero-gain shortcut") {
  Eigen::MatrixXd A = Eigen::Vector3d(-1.0, -2.0, -3.0).asDiagonal();
  Eigen::MatrixXd B(3, 1);
  B << 1.0, 1.0, 1.0;
  const auto K = place_poles(A, B, {{-1.0, 0.0}, {-2.0, 0.0}, {-3.0, 0.0}});
  REQUIRE(K.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("place_poles single input double integrator") {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.0, 1.0, 0.0, 0.0;
  B << 0.0, 1.0;
  const auto K = place_poles(A, B, {{-1.0, 0.0}, {-2.0, 0.0}});
  REQUIRE(K(0, 0) == Approx(-2.0).margin(1e-9));
  REQUIRE(K(0, 1) == Approx(-3.0).margin(1e-9));
}

TEST_CASE("place_poles complex pair and abscissa consistency") {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.0, 1.0, -1.0, 1.0;
  B << 0.0, 1.0;
  const auto K = place_poles(A, B, {{-1.0, 1.0}, {-1.0, -1.0}});
  const Spectrum ev = spectrum(Eigen::MatrixXd(A + B * K));
  for (Eigen::Index i = 0; i < 2; ++i) {
    REQUIRE(ev(i).real() == Approx(-1.0).margin(1e-6));
    REQUIRE(std::abs(std::abs(ev(i).imag()) - 1.0) < 1e-6);
  }
  REQUIRE(spectral_abscissa(Eigen::MatrixXd(A + B * K)) == Approx(-1.0).margin(1e-6));
}

TEST_CASE("place_poles rejects uncontrollable pairs") {
  Eigen::MatrixXd A = Eigen::Vector2d(1.0, 2.0).asDiagonal();
  Eigen::MatrixXd B(2, 1);
  B << 1.0, 0.0;
  REQUIRE_THROWS_AS(place_poles(A, B, {{-1.0, 0.0}, {-2.0, 0.0}}), PlacementError);
}

TEST_CASE("place_poles is deterministic on random controllable systems") {
  std::mt19937 rng(57);
  for (int trial = 0; trial < 15; ++trial) {
    const int n = 2 + trial % 3;
    const int m = 1 + trial % 2;
    const Eigen::MatrixXd A = random_matrix(n, n, rng);
    const Eigen::MatrixXd B = random_matrix(n, m, rng);
    if (controllability_rank(A, B) != n) continue;
    std::vector<std::complex<double>> targets;
    for (int i = 0; i < n; ++i) targets.push_back({-1.0 - 0.5 * i, 0.0});
    const auto K1 = place_poles(A, B, targets);
    const auto K2 = place_poles(A, B, targets);
    REQUIRE((K1 - K2).cwiseAbs().maxCoeff() == 0.0);
    const Spectrum ev = spectrum(Eigen::MatrixXd(A + B * K1));
    std::vector<double> re(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) re[i] = ev(i).real();
    std::sort(re.begin(), re.end());
    for (int i = 0; i < n; ++i)
      REQUIRE(re[i] == Approx(-1.0 - 0.5 * (n - 1 - i)).margin(1e-6));
  }
}

TEST_CASE("place_poles over the complex field") {
  std::mt19937 rng(91);
  const Eigen::MatrixXcd A = random_cmatrix(3, 3, rng);
  const Eigen::MatrixXcd B = random_cmatrix(3, 2, rng);
  std::vector<std::complex<double>> targets = {{-1.0, 0.5}, {-2.0, -0.25}, {-0.5, 0.0}};
  const Eigen::MatrixXcd K = place_poles(A, B, targets);
  const Spectrum ev = spectrum(Eigen::MatrixXcd(A + B * K));
  auto lex = [](std::complex<double> a, std::complex<double> b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  };
  std::vector<std::complex<double>> got(ev.data(), ev.data() + ev.size());
  std::sort(got.begin(), got.end(), lex);
  std::sort(targets.begin(), targets.end(), lex);
  for (std::size_t i = 0; i < targets.size(); ++i)
    REQUIRE(std::abs(got[i] - targets[i]) < 1e-6);
}
