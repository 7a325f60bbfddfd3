#pragma once

/// Delay-robustness certification for constant-delay predictor feedback under
/// uncertain time-varying input delays.
///
/// Given the closed-loop matrix M and the mismatch matrix N = e^{D0 A} B K,
/// the block LMI
///
///   Theta(delta, kappa) =
///     [ 2k P1 + M^T P2 + P2^T M   P1 - P2^T + M^T P3      d P2^T N        ]
///     [          .               -P3 - P3^T + 2 d Q       d P3^T N        ]
///     [          .                        .              -d e^{-2k D0} Q  ]
///
/// being negative definite (with P1, Q positive definite) certifies
/// exponential decay at rate kappa for every delay D(t) staying within
/// delta of D0. This header assembles Theta, decides feasibility through
/// the sdp engine (re-verifying every certificate independently), searches
/// for the maximal certified delta, and computes the two closed-form
/// comparison bounds: the small-gain delta of the norm condition and its
/// log-form upper estimate delta_E.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "delaycert/linalg.hpp"
#include "delaycert/sdp.hpp"

namespace delaycert {

struct CertificationProblem {
  RealMatrix M;      // closed-loop matrix (or its realification)
  RealMatrix N;      // delay-mismatch matrix (or its realification)
  double D0 = 1.0;   // nominal delay, seconds
  double kappa = 0.0;  // requested decay rate, 1/s
  double eps_pd = 1e-6;  // definiteness floor for P1 and Q

  void validate() const {
    detail::require_square(M.rows(), M.cols(), "CertificationProblem");
    detail::require_square(N.rows(), N.cols(), "CertificationProblem");
    if (M.rows() != N.rows())
      throw DimensionError("CertificationProblem: M and N must have equal order");
    if (!(D0 > 0.0)) throw std::invalid_argument("CertificationProblem: D0 must be > 0");
    if (!(kappa >= 0.0)) throw std::invalid_argument("CertificationProblem: kappa must be >= 0");
    if (!(eps_pd > 0.0)) throw std::invalid_argument("CertificationProblem: eps_pd must be > 0");
  }
};

struct LkCertificate {
  RealMatrix P1, P2, P3, Q;
  double margin = 0.0;  // lambda_max of Theta at these variables
};

enum class Feasibility { feasible, infeasible, indeterminate };

struct FeasibilityReport {
  Feasibility verdict = Feasibility::indeterminate;
  std::optional<LkCertificate> certificate;
  double solver_margin = std::numeric_limits<double>::quiet_NaN();
  std::string note;
};

/// The 3n x 3n block matrix Theta(delta, kappa); symmetric by construction.
inline RealMatrix assemble_theta(const RealMatrix& P1, const RealMatrix& P2,
                                 const RealMatrix& P3, const RealMatrix& Q,
                                 double delta, const CertificationProblem& prob) {
  const Eigen::Index n = prob.M.rows();
  if (P1.rows() != n || P1.cols() != n || P2.rows() != n || P2.cols() != n ||
      P3.rows() != n || P3.cols() != n || Q.rows() != n || Q.cols() != n)
    throw DimensionError("assemble_theta: variable order mismatch");
  const RealMatrix MtP2 = prob.M.transpose() * P2;
  const RealMatrix Qs = 0.5 * (Q + Q.transpose().eval());
  // diagonal blocks averaged with their transposes: addition chains are not
  // associative in floating point, and the output must equal its transpose
  // exactly
  auto exact_sym = [](const RealMatrix& X) -> RealMatrix {
    return 0.5 * (X + X.transpose().eval());
  };
  RealMatrix theta(3 * n, 3 * n);
  theta.block(0, 0, n, n) = exact_sym(
      prob.kappa * (P1 + P1.transpose().eval()) + MtP2 + MtP2.transpose().eval());
  theta.block(0, n, n, n) = P1 - P2.transpose() + prob.M.transpose() * P3;
  theta.block(0, 2 * n, n, n) = delta * P2.transpose() * prob.N;
  theta.block(n, n, n, n) = exact_sym(-(P3 + P3.transpose().eval()) + 2.0 * delta * Qs);
  theta.block(n, 2 * n, n, n) = delta * P3.transpose() * prob.N;
  theta.block(2 * n, 2 * n, n, n) = -delta * std::exp(-2.0 * prob.kappa * prob.D0) * Qs;
  theta.block(n, 0, n, n) = theta.block(0, n, n, n).transpose();
  theta.block(2 * n, 0, n, n) = theta.block(0, 2 * n, n, n).transpose();
  theta.block(2 * n, n, n, n) = theta.block(n, 2 * n, n, n).transpose();
  return theta;
}

inline RealMatrix assemble_theta(const LkCertificate& cert, double delta,
                                 const CertificationProblem& prob) {
  return assemble_theta(cert.P1, cert.P2, cert.P3, cert.Q, delta, prob);
}

namespace detail {

// Decision-vector layout: P1 (upper triangle), P2 (column-major), P3
// (column-major), Q (upper triangle).
struct ThetaVariableLayout {
  Eigen::Index n = 0;
  Eigen::Index sym_count = 0;  // n (n + 1) / 2

  explicit ThetaVariableLayout(Eigen::Index order)
      : n(order), sym_count(order * (order + 1) / 2) {}

  Eigen::Index dim() const { return 2 * sym_count + 2 * n * n; }

  // basis matrix for the k-th coordinate of a symmetric variable
  RealMatrix sym_basis(Eigen::Index k) const {
    RealMatrix E = RealMatrix::Zero(n, n);
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) {
        if (idx == k) {
          E(i, j) = 1.0;
          E(j, i) = 1.0;
          return E;
        }
        ++idx;
      }
    throw std::out_of_range("sym_basis");
  }

  void unpack(const RealVector& x, RealMatrix& P1, RealMatrix& P2, RealMatrix& P3,
              RealMatrix& Q) const {
    P1 = RealMatrix::Zero(n, n);
    Q = RealMatrix::Zero(n, n);
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) {
        P1(i, j) = P1(j, i) = x(idx);
        ++idx;
      }
    P2 = Eigen::Map<const RealMatrix>(x.data() + idx, n, n);
    idx += n * n;
    P3 = Eigen::Map<const RealMatrix>(x.data() + idx, n, n);
    idx += n * n;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) {
        Q(i, j) = Q(j, i) = x(idx);
        ++idx;
      }
  }
};

inline AffineSymmetricMap build_theta_map(const CertificationProblem& prob, double delta) {
  const Eigen::Index n = prob.M.rows();
  const ThetaVariableLayout layout(n);
  const Eigen::Index p = layout.dim();

  AffineSymmetricMap map;
  map.decision_dim = p;

  AffineBlock theta_block;
  theta_block.constant = RealMatrix::Zero(3 * n, 3 * n);
  theta_block.coeffs.resize(p);

  AffineBlock p1_floor;  // eps_pd I - P1 <= t I
  p1_floor.constant = prob.eps_pd * RealMatrix::Identity(n, n);
  p1_floor.coeffs.assign(p, RealMatrix::Zero(n, n));

  AffineBlock q_floor;
  q_floor.constant = prob.eps_pd * RealMatrix::Identity(n, n);
  q_floor.coeffs.assign(p, RealMatrix::Zero(n, n));

  const RealMatrix Z = RealMatrix::Zero(n, n);
  Eigen::Index idx = 0;
  for (Eigen::Index k = 0; k < layout.sym_count; ++k, ++idx) {
    const RealMatrix E = layout.sym_basis(k);
    theta_block.coeffs[idx] = assemble_theta(E, Z, Z, Z, delta, prob);
    p1_floor.coeffs[idx] = -E;
  }
  for (Eigen::Index col = 0; col < n; ++col)
    for (Eigen::Index row = 0; row < n; ++row, ++idx) {
      RealMatrix E = Z;
      E(row, col) = 1.0;
      theta_block.coeffs[idx] = assemble_theta(Z, E, Z, Z, delta, prob);
    }
  for (Eigen::Index col = 0; col < n; ++col)
    for (Eigen::Index row = 0; row < n; ++row, ++idx) {
      RealMatrix E = Z;
      E(row, col) = 1.0;
      theta_block.coeffs[idx] = assemble_theta(Z, Z, E, Z, delta, prob);
    }
  for (Eigen::Index k = 0; k < layout.sym_count; ++k, ++idx) {
    const RealMatrix E = layout.sym_basis(k);
    theta_block.coeffs[idx] = assemble_theta(Z, Z, Z, E, delta, prob);
    q_floor.coeffs[idx] = -E;
  }

  map.blocks.push_back(std::move(theta_block));
  map.blocks.push_back(std::move(p1_floor));
  map.blocks.push_back(std::move(q_floor));
  return map;
}

}  // namespace detail

inline constexpr double kStrictness = 1e-8;

/// Decide Theta(delta, kappa) < 0 strictly with P1, Q >= eps_pd I. The
/// certificate (when reported feasible) has been re-verified by reassembling
/// Theta and checking its eigenvalues, so the answer does not rely on solver
/// internals.
inline FeasibilityReport check_feasibility(const CertificationProblem& prob, double delta,
                                           double tol_gap = 1e-7, int max_iters = 4000) {
  prob.validate();
  if (!(delta > 0.0 && delta < prob.D0))
    throw std::invalid_argument("check_feasibility: need 0 < delta < D0");

  const AffineSymmetricMap map = detail::build_theta_map(prob, delta);
  const FeasibilityOutcome sol = minimize_max_eig(map, tol_gap, max_iters);

  FeasibilityReport report;
  report.solver_margin = sol.margin;
  if (sol.status == FeasibilityStatus::numerical_failure) {
    report.verdict = Feasibility::indeterminate;
    report.note = "solver: " + sol.note;
    return report;
  }
  if (sol.status != FeasibilityStatus::strictly_feasible) {
    report.verdict = Feasibility::infeasible;
    return report;
  }

  const detail::ThetaVariableLayout layout(prob.M.rows());
  LkCertificate cert;
  layout.unpack(sol.witness, cert.P1, cert.P2, cert.P3, cert.Q);

  // independent re-verification
  const RealMatrix theta = assemble_theta(cert, delta, prob);
  const auto [tmin, tmax] = symmetric_extremal_eigs(theta);
  const double p1_min = symmetric_extremal_eigs(cert.P1).first;
  const double q_min = symmetric_extremal_eigs(cert.Q).first;
  cert.margin = tmax;
  (void)tmin;
  const double margin_tol = 1e-7 + 1e-12 * std::abs(sol.margin);
  if (tmax < -kStrictness && tmax <= sol.margin + margin_tol &&
      p1_min >= prob.eps_pd - 1e-9 && q_min >= prob.eps_pd - 1e-9) {
    report.verdict = Feasibility::feasible;
    report.certificate = std::move(cert);
  } else {
    report.verdict = Feasibility::indeterminate;
    report.note = "witness failed independent re-verification";
  }
  return report;
}

struct MaxDeltaResult {
  double delta = 0.0;           // largest certified delta, rounded down to tol
  bool indeterminate_seen = false;
  int evaluations = 0;
  std::string diagnostic;
};

/// Largest delta in (0, D0) with Theta(delta, kappa) strictly feasible,
/// located by bisection on a tol-spaced grid. Feasibility is monotone
/// decreasing in delta, so grid bisection is exact up to the tolerance:
/// the result is certified, and result + tol was found infeasible (or
/// reaches D0).
inline MaxDeltaResult max_delta(const CertificationProblem& prob, double tol = 1e-4) {
  prob.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("max_delta: tol must be > 0");
  if (!is_hurwitz(prob.M)) throw PreconditionError("max_delta: M is not Hurwitz");

  MaxDeltaResult res;
  const auto grid_hi = static_cast<long>(std::ceil(prob.D0 / tol - 1e-9));
  long lo = 0;        // largest index known feasible (0 = nothing certified yet)
  long hi = grid_hi;  // smallest index known infeasible (grid_hi*tol >= D0)

  auto probe = [&](long k) {
    const double delta = double(k) * tol;
    const auto rep = check_feasibility(prob, delta);
    ++res.evaluations;
    if (rep.verdict == Feasibility::indeterminate) res.indeterminate_seen = true;
    return rep.verdict == Feasibility::feasible;
  };

  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    if (probe(mid))
      lo = mid;
    else
      hi = mid;
  }
  res.delta = double(lo) * tol;
  if (lo == 0)
    res.diagnostic =
        "LMI infeasible at delta = tol: M is not certified at this kappa";
  return res;
}

/// Lemma-2 lower bound on the feasibility range: Theta(delta, kappa) < 0 for
/// every delta in (0, delta_star). Requires kappa < 1 / (4 lambda_max(P2))
/// where P2 solves M^T P2 + P2 M = -I.
inline double delta_star(const CertificationProblem& prob) {
  prob.validate();
  if (!is_hurwitz(prob.M)) throw PreconditionError("delta_star: M is not Hurwitz");
  if (induced_norm2(prob.N) == 0.0) return prob.D0;

  const RealMatrix P2 = solve_lyapunov_identity(prob.M);
  const double lam_max_p2 = symmetric_extremal_eigs(P2).second;
  if (!(prob.kappa < 1.0 / (4.0 * lam_max_p2)))
    throw PreconditionError("delta_star: kappa >= 1/(4 lambda_max(P2))");

  const RealMatrix Minv = prob.M.inverse();
  const RealMatrix S3 = Minv.transpose() * Minv;
  const double lam_min_s3 = symmetric_extremal_eigs(0.5 * (S3 + S3.transpose().eval())).first;
  const double beta0 = std::min(1.0 - 4.0 * prob.kappa * lam_max_p2, lam_min_s3);

  RealMatrix stacked(prob.M.rows(), 2 * prob.M.cols());
  stacked << P2, RealMatrix(-Minv.transpose() * P2);
  const double denom = 2.0 * std::sqrt(2.0) * std::exp(prob.kappa * prob.D0) *
                       induced_norm2(RealMatrix(prob.N.transpose() * stacked));
  return std::min(prob.D0, beta0 / denom);
}

/// Assemble a certification problem from system data: M = A + BK and
/// N = e^{D0 A} B K. The complex overload realifies both matrices.
inline CertificationProblem build_problem(const RealMatrix& A, const RealMatrix& B,
                                          const RealMatrix& K, double D0, double kappa,
                                          double eps_pd = 1e-6) {
  detail::require_square(A.rows(), A.cols(), "build_problem");
  if (B.rows() != A.rows() || K.cols() != A.rows() || K.rows() != B.cols())
    throw DimensionError("build_problem: inconsistent A, B, K shapes");
  const RealMatrix Acl = A + B * K;
  if (!is_hurwitz(Acl)) throw PreconditionError("build_problem: A + BK is not Hurwitz");
  CertificationProblem prob;
  prob.M = Acl;
  prob.N = mat_exp(A, D0) * B * K;
  prob.D0 = D0;
  prob.kappa = kappa;
  prob.eps_pd = eps_pd;
  prob.validate();
  return prob;
}

inline CertificationProblem build_problem(const ComplexMatrix& A, const ComplexMatrix& B,
                                          const ComplexMatrix& K, double D0, double kappa,
                                          double eps_pd = 1e-6) {
  detail::require_square(A.rows(), A.cols(), "build_problem");
  if (B.rows() != A.rows() || K.cols() != A.rows() || K.rows() != B.cols())
    throw DimensionError("build_problem: inconsistent A, B, K shapes");
  const ComplexMatrix Acl = A + B * K;
  if (!is_hurwitz(Acl)) throw PreconditionError("build_problem: A + BK is not Hurwitz");
  CertificationProblem prob;
  prob.M = realify(Acl);
  prob.N = realify(ComplexMatrix(mat_exp(A, D0) * B * K));
  prob.D0 = D0;
  prob.kappa = kappa;
  prob.eps_pd = eps_pd;
  prob.validate();
  return prob;
}

/// Closed-form estimate delta_E = log(1 + mu_M / ||e^{D0 A} B K||) / ||A_cl||,
/// an upper bound on every delta satisfying the small-gain condition. Returns
/// D0 when the mismatch term vanishes.
inline double delta_E(const RealMatrix& A, const RealMatrix& B, const RealMatrix& K,
                      double D0) {
  const RealMatrix Acl = A + B * K;
  if (!is_hurwitz(Acl)) throw PreconditionError("delta_E: A + BK is not Hurwitz");
  const double mismatch = induced_norm2(RealMatrix(mat_exp(A, D0) * B * K));
  if (mismatch < 1e-300) return D0;
  const double mu_max = -spectral_abscissa(Acl);
  return std::log(1.0 + mu_max / mismatch) / induced_norm2(Acl);
}

struct SmallGainEnvelope {
  double M_const = 1.0;  // overshoot constant, >= 1
  double mu = 0.0;       // decay rate, 1/s
};

/// Tight sampled envelope ||e^{A_cl t}|| <= M e^{-mu t}: M is the grid
/// maximum of ||e^{A_cl t}|| e^{mu t} over [0, 50/mu_M] times a 1.01 safety
/// factor (1001 samples).
inline SmallGainEnvelope estimate_envelope(const RealMatrix& A_cl, double mu) {
  if (!is_hurwitz(A_cl)) throw PreconditionError("estimate_envelope: A_cl is not Hurwitz");
  const double mu_max = -spectral_abscissa(A_cl);
  if (!(mu > 0.0 && mu < mu_max))
    throw std::invalid_argument("estimate_envelope: need 0 < mu < mu_M(A_cl)");
  const int samples = 1000;
  const double horizon = 50.0 / mu_max;
  const double step = horizon / samples;
  const RealMatrix E = mat_exp(A_cl, step);
  RealMatrix P = RealMatrix::Identity(A_cl.rows(), A_cl.cols());
  double best = 1.0;
  for (int k = 1; k <= samples; ++k) {
    P = P * E;
    best = std::max(best, induced_norm2(P) * std::exp(mu * k * step));
  }
  return {1.01 * best, mu};
}

struct SmallGainResult {
  double delta = 0.0;
  SmallGainEnvelope envelope;
};

/// Evaluate the small-gain inequality
///   M ||e^{D0 A} B K|| (e^{||A_cl|| delta} - e^{-mu delta}) < mu
/// left side minus right side.
inline double small_gain_gap(double delta, double mismatch_norm, double acl_norm,
                             const SmallGainEnvelope& env) {
  return env.M_const * mismatch_norm *
             (std::exp(acl_norm * delta) - std::exp(-env.mu * delta)) -
         env.mu;
}

/// Largest delta satisfying the small-gain condition over a grid of candidate
/// decay rates; the best (delta, envelope) pair is returned and the returned
/// delta satisfies the inequality under its envelope.
inline SmallGainResult small_gain_delta(const RealMatrix& A, const RealMatrix& B,
                                        const RealMatrix& K, double D0,
                                        const std::vector<double>& mu_grid) {
  if (mu_grid.empty()) throw std::invalid_argument("small_gain_delta: empty mu grid");
  const RealMatrix Acl = A + B * K;
  if (!is_hurwitz(Acl)) throw PreconditionError("small_gain_delta: A + BK is not Hurwitz");
  const double mu_max = -spectral_abscissa(Acl);
  const double mismatch = induced_norm2(RealMatrix(mat_exp(A, D0) * B * K));
  const double acl_norm = induced_norm2(Acl);

  SmallGainResult best;
  for (const double mu : mu_grid) {
    if (!(mu > 0.0 && mu < mu_max))
      throw std::invalid_argument("small_gain_delta: mu grid value outside (0, mu_M)");
    const SmallGainEnvelope env = estimate_envelope(Acl, mu);
    double delta;
    if (mismatch == 0.0 || small_gain_gap(D0, mismatch, acl_norm, env) < 0.0) {
      delta = D0;  // condition holds on the whole admissible range
    } else {
      double lo = 0.0, hi = D0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (small_gain_gap(mid, mismatch, acl_norm, env) < 0.0)
          lo = mid;
        else
          hi = mid;
      }
      delta = lo;
    }
    if (delta > best.delta) {
      best.delta = delta;
      best.envelope = env;
    }
  }
  return best;
}

/// Admissible decay rate for the full spectral system: kappa when the
/// residual gap alpha exceeds kappa, otherwise just under alpha.
inline double decay_rate_eta(double kappa, double alpha) {
  if (!(kappa > 0.0) || !(alpha > 0.0))
    throw std::invalid_argument("decay_rate_eta: kappa and alpha must be > 0");
  return alpha > kappa ? kappa : 0.99 * alpha;
}

}  // namespace delaycert
