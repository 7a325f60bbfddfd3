#pragma once

/// Dense real/complex linear-algebra kernels shared by the certification and
/// simulation layers: matrix exponential, spectral quantities, Lyapunov
/// solving, realification, pole placement, controllability.
///
/// Everything here operates on small dense matrices (order <= ~20); Eigen
/// does the factorizations.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "delaycert/errors.hpp"

namespace delaycert {

using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using Spectrum = Eigen::VectorXcd;

namespace detail {

inline void require_square(const Eigen::Index rows, const Eigen::Index cols,
                           const char* who) {
  if (rows != cols) throw DimensionError(std::string(who) + ": matrix must be square");
}

template <typename Mat>
void require_finite(const Mat& m, const char* who) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(who) + ": non-finite entries");
}

template <typename Derived>
using PlainMatrix =
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;

}  // namespace detail

/// e^{tA} via Eigen's scaling-and-squaring Pade implementation.
template <typename Derived>
detail::PlainMatrix<Derived> mat_exp(const Eigen::MatrixBase<Derived>& A, double t = 1.0) {
  detail::require_square(A.rows(), A.cols(), "mat_exp");
  const detail::PlainMatrix<Derived> M = A;
  detail::require_finite(M, "mat_exp");
  if (!std::isfinite(t)) throw std::invalid_argument("mat_exp: t must be finite");
  return (t * M).exp();
}

template <typename Derived>
Spectrum spectrum(const Eigen::MatrixBase<Derived>& A) {
  detail::require_square(A.rows(), A.cols(), "spectrum");
  const detail::PlainMatrix<Derived> M = A;
  detail::require_finite(M, "spectrum");
  if constexpr (std::is_same_v<typename Derived::Scalar, double>) {
    Eigen::EigenSolver<RealMatrix> es(M, /*computeEigenvectors=*/false);
    return es.eigenvalues();
  } else {
    Eigen::ComplexEigenSolver<ComplexMatrix> es(M, false);
    return es.eigenvalues();
  }
}

/// max{Re lambda : lambda in sp(A)}.
template <typename Derived>
double spectral_abscissa(const Eigen::MatrixBase<Derived>& A) {
  const Spectrum ev = spectrum(A);
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ev.size(); ++i) worst = std::max(worst, ev(i).real());
  return worst;
}

template <typename Derived>
bool is_hurwitz(const Eigen::MatrixBase<Derived>& A) {
  return spectral_abscissa(A) < 0.0;
}

/// Largest singular value (induced Euclidean norm).
template <typename Derived>
double induced_norm2(const Eigen::MatrixBase<Derived>& A) {
  if (A.size() == 0) return 0.0;
  const detail::PlainMatrix<Derived> M = A;
  return Eigen::JacobiSVD<detail::PlainMatrix<Derived>>(M).singularValues()(0);
}

/// Unique symmetric positive definite P with M^T P + P M = -I, for Hurwitz M.
/// Solved by vectorization to an n^2 x n^2 linear system.
inline RealMatrix solve_lyapunov_identity(const RealMatrix& M) {
  detail::require_square(M.rows(), M.cols(), "solve_lyapunov_identity");
  if (!is_hurwitz(M))
    throw PreconditionError("solve_lyapunov_identity: M is not Hurwitz");
  const Eigen::Index n = M.rows();
  // vec(M^T P) = (I (x) M^T) vec(P); vec(P M) = (M^T (x) I) vec(P)
  RealMatrix op = RealMatrix::Zero(n * n, n * n);
  for (Eigen::Index col = 0; col < n; ++col) op.block(col * n, col * n, n, n) = M.transpose();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) op(k * n + j, i * n + j) += M(i, k);
  RealVector rhs = RealVector::Zero(n * n);
  for (Eigen::Index i = 0; i < n; ++i) rhs(i * n + i) = -1.0;
  const RealVector vec_p = op.partialPivLu().solve(rhs);
  RealMatrix P(n, n);
  for (Eigen::Index col = 0; col < n; ++col) P.col(col) = vec_p.segment(col * n, n);
  return 0.5 * (P + P.transpose().eval());
}

/// R(M) = [Re M, -Im M; Im M, Re M].
inline RealMatrix realify(const ComplexMatrix& M) {
  const Eigen::Index n = M.rows(), m = M.cols();
  RealMatrix R(2 * n, 2 * m);
  R.topLeftCorner(n, m) = M.real();
  R.topRightCorner(n, m) = -M.imag();
  R.bottomLeftCorner(n, m) = M.imag();
  R.bottomRightCorner(n, m) = M.real();
  return R;
}

/// Rank of [B, AB, ..., A^{n-1}B] with tolerance 1e-9 * sigma_max.
template <typename DA, typename DB>
Eigen::Index controllability_rank(const Eigen::MatrixBase<DA>& A_in,
                                  const Eigen::MatrixBase<DB>& B_in) {
  detail::require_square(A_in.rows(), A_in.cols(), "controllability_rank");
  if (B_in.rows() != A_in.rows()) throw DimensionError("controllability_rank: B row count");
  using Mat = detail::PlainMatrix<DA>;
  const Mat A = A_in;
  const Mat B = B_in.template cast<typename DA::Scalar>();
  const Eigen::Index n = A.rows(), m = B.cols();
  Mat ctrb(n, n * m);
  Mat block = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * m, m) = block;
    block = A * block;
  }
  const auto sv = Eigen::JacobiSVD<Mat>(ctrb).singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double tol = 1e-9 * sv(0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  return rank;
}

/// Smallest and largest eigenvalue of a symmetric matrix.
inline std::pair<double, double> symmetric_extremal_eigs(const RealMatrix& P) {
  detail::require_square(P.rows(), P.cols(), "symmetric_extremal_eigs");
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw SymmetryError("symmetric_extremal_eigs: input is not symmetric");
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(P, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return {ev(0), ev(ev.size() - 1)};
}

namespace detail {

// Multiset comparison of complex values, sorted by (Re, Im).
inline bool same_spectrum(const Spectrum& a, std::vector<std::complex<double>> b,
                          double tol) {
  if (a.size() != static_cast<Eigen::Index>(b.size())) return false;
  std::vector<std::complex<double>> av(a.data(), a.data() + a.size());
  auto lex = [](const std::complex<double>& x, const std::complex<double>& y) {
    if (x.real() != y.real()) return x.real() < y.real();
    return x.imag() < y.imag();
  };
  std::sort(av.begin(), av.end(), lex);
  std::sort(b.begin(), b.end(), lex);
  for (std::size_t i = 0; i < av.size(); ++i)
    if (std::abs(av[i] - b[i]) > tol) return false;
  return true;
}

// Parameter-matrix catalog for the Sylvester placement method. Columns of G
// select directions inside the per-pole subspaces (A - lambda_i I)^{-1} R(B);
// the resulting gain is invariant under column scaling. The catalog order is
// part of the algorithm: the first pattern that yields an invertible solution
// wins, which keeps the method deterministic.
inline std::vector<RealMatrix> placement_patterns(Eigen::Index m, Eigen::Index n) {
  std::vector<RealMatrix> out;
  {  // geometric first row, ones below
    RealMatrix G = RealMatrix::Ones(m, n);
    for (Eigen::Index j = 0; j < n; ++j) G(0, j) = std::pow(2.0, double(n - 1 - j));
    out.push_back(G);
  }
  {  // cyclic unit pattern
    RealMatrix G = RealMatrix::Zero(m, n);
    for (Eigen::Index j = 0; j < n; ++j) G(j % m, j) = 1.0;
    out.push_back(G);
  }
  {  // alternating signs with a mild column ramp
    RealMatrix G(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        G(i, j) = (((i + j) % 2 == 0) ? 1.0 : -1.0) * (1.0 + double(j) / double(n));
    out.push_back(G);
  }
  {  // fixed 64-bit LCG draw, last resort for degenerate geometries
    RealMatrix G(m, n);
    std::uint64_t s = 0x9e3779b97f4a7c15ull;
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        s = s * 6364136223846793005ull + 1442695040888963407ull;
        G(i, j) = 2.0 * (double(s >> 11) / 9007199254740992.0) - 1.0;
      }
    out.push_back(G);
  }
  return out;
}

}  // namespace detail

/// Eigenvalue assignment by state feedback: returns K with
/// sp(A + BK) = targets (each within 1e-6).
///
/// Method: solve the Sylvester equation A X - X Lambda = B G for X, where
/// Lambda is the real block-diagonal form of the targets (sorted by real part,
/// then imaginary part) and G comes from a fixed pattern catalog; then
/// K = -G X^{-1}. Same inputs always produce the same K. Targets equal to
/// sp(A) short-circuit to K = 0.
inline RealMatrix place_poles(const RealMatrix& A, const RealMatrix& B,
                              std::vector<std::complex<double>> targets) {
  detail::require_square(A.rows(), A.cols(), "place_poles");
  const Eigen::Index n = A.rows(), m = B.cols();
  if (B.rows() != n) throw DimensionError("place_poles: B row count");
  if (static_cast<Eigen::Index>(targets.size()) != n)
    throw std::invalid_argument("place_poles: need exactly n target poles");

  double scale = 1.0;
  for (const auto& z : targets) scale = std::max(scale, std::abs(z));
  const double match_tol = 1e-9 * scale;

  if (detail::same_spectrum(spectrum(A), targets, match_tol))
    return RealMatrix::Zero(m, n);

  if (controllability_rank(A, B) != n)
    throw PlacementError("place_poles: (A, B) is not controllable");

  // Real block-diagonal form of the target set; requires conjugate closure.
  auto lex = [](const std::complex<double>& x, const std::complex<double>& y) {
    if (x.real() != y.real()) return x.real() < y.real();
    return x.imag() < y.imag();
  };
  std::sort(targets.begin(), targets.end(), lex);
  RealMatrix Lambda = RealMatrix::Zero(n, n);
  {
    std::vector<bool> used(targets.size(), false);
    Eigen::Index pos = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (used[i]) continue;
      const auto z = targets[i];
      if (std::abs(z.imag()) <= match_tol) {
        Lambda(pos, pos) = z.real();
        used[i] = true;
        pos += 1;
        continue;
      }
      std::size_t partner = targets.size();
      for (std::size_t j = i + 1; j < targets.size(); ++j)
        if (!used[j] && std::abs(targets[j] - std::conj(z)) <= 10 * match_tol) {
          partner = j;
          break;
        }
      if (partner == targets.size())
        throw std::invalid_argument("place_poles: targets not closed under conjugation");
      const double sigma = z.real(), omega = std::abs(z.imag());
      Lambda(pos, pos) = sigma;
      Lambda(pos, pos + 1) = omega;
      Lambda(pos + 1, pos) = -omega;
      Lambda(pos + 1, pos + 1) = sigma;
      used[i] = used[partner] = true;
      pos += 2;
    }
  }

  // vec form of A X - X Lambda = B G
  RealMatrix op = RealMatrix::Zero(n * n, n * n);
  for (Eigen::Index col = 0; col < n; ++col) op.block(col * n, col * n, n, n) = A;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) op(k * n + j, i * n + j) -= Lambda(i, k);

  for (const RealMatrix& G : detail::placement_patterns(m, n)) {
    const RealMatrix BG = B * G;
    RealVector rhs(n * n);
    for (Eigen::Index col = 0; col < n; ++col) rhs.segment(col * n, n) = BG.col(col);
    const RealVector vec_x = op.colPivHouseholderQr().solve(rhs);
    RealMatrix X(n, n);
    for (Eigen::Index col = 0; col < n; ++col) X.col(col) = vec_x.segment(col * n, n);
    Eigen::FullPivLU<RealMatrix> lu(X);
    if (!lu.isInvertible()) continue;
    const RealMatrix K = -G * lu.inverse();
    if (!K.allFinite()) continue;
    if (detail::same_spectrum(spectrum(RealMatrix(A + B * K)), targets, 1e-6 * scale))
      return K;
  }
  throw PlacementError("place_poles: no catalog pattern produced a valid gain");
}

/// Complex-field variant; Lambda is diagonal and conjugate closure is not required.
inline ComplexMatrix place_poles(const ComplexMatrix& A, const ComplexMatrix& B,
                                 std::vector<std::complex<double>> targets) {
  detail::require_square(A.rows(), A.cols(), "place_poles");
  const Eigen::Index n = A.rows(), m = B.cols();
  if (B.rows() != n) throw DimensionError("place_poles: B row count");
  if (static_cast<Eigen::Index>(targets.size()) != n)
    throw std::invalid_argument("place_poles: need exactly n target poles");

  double scale = 1.0;
  for (const auto& z : targets) scale = std::max(scale, std::abs(z));
  if (detail::same_spectrum(spectrum(A), targets, 1e-9 * scale))
    return ComplexMatrix::Zero(m, n);
  if (controllability_rank(A, B) != n)
    throw PlacementError("place_poles: (A, B) is not controllable");

  auto lex = [](const std::complex<double>& x, const std::complex<double>& y) {
    if (x.real() != y.real()) return x.real() < y.real();
    return x.imag() < y.imag();
  };
  std::sort(targets.begin(), targets.end(), lex);

  ComplexMatrix op = ComplexMatrix::Zero(n * n, n * n);
  for (Eigen::Index col = 0; col < n; ++col) {
    op.block(col * n, col * n, n, n) = A;
    op.block(col * n, col * n, n, n) -= targets[col] * ComplexMatrix::Identity(n, n);
  }

  for (const RealMatrix& Gr : detail::placement_patterns(m, n)) {
    const ComplexMatrix G = Gr.cast<std::complex<double>>();
    const ComplexMatrix BG = B * G;
    Eigen::VectorXcd rhs(n * n);
    for (Eigen::Index col = 0; col < n; ++col) rhs.segment(col * n, n) = BG.col(col);
    const Eigen::VectorXcd vec_x = op.colPivHouseholderQr().solve(rhs);
    ComplexMatrix X(n, n);
    for (Eigen::Index col = 0; col < n; ++col) X.col(col) = vec_x.segment(col * n, n);
    Eigen::FullPivLU<ComplexMatrix> lu(X);
    if (!lu.isInvertible()) continue;
    const ComplexMatrix K = -G * lu.inverse();
    if (!K.allFinite()) continue;
    if (detail::same_spectrum(spectrum(ComplexMatrix(A + B * K)), targets, 1e-6 * scale))
      return K;
  }
  throw PlacementError("place_poles: no catalog pattern produced a valid gain");
}

}  // namespace delaycert
