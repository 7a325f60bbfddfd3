#pragma once

/// Small-scale semidefinite feasibility: given an affine map from a decision
/// vector to a list of symmetric blocks, minimize the maximum eigenvalue over
/// the blocks (epigraph form  min t  s.t.  F_i(x) <= t I).
///
/// The solver is a log-det barrier path-following method on (x, t). A
/// strictly feasible start always exists (pick t above the largest eigenvalue
/// at x = 0), each centering is damped Newton, and the barrier gap m/eta
/// bounds the suboptimality. Problems here are tiny (block orders <= ~40,
/// decision dims <= ~150), so robustness is the only design goal. Callers are
/// expected to re-verify any returned witness independently.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "delaycert/linalg.hpp"

namespace delaycert {

struct AffineBlock {
  RealMatrix constant;              // symmetric, order k
  std::vector<RealMatrix> coeffs;   // one symmetric matrix per decision coordinate
};

struct AffineSymmetricMap {
  Eigen::Index decision_dim = 0;
  std::vector<AffineBlock> blocks;

  void validate() const {
    for (const auto& blk : blocks) {
      const Eigen::Index k = blk.constant.rows();
      detail::require_square(k, blk.constant.cols(), "AffineSymmetricMap");
      if (static_cast<Eigen::Index>(blk.coeffs.size()) != decision_dim)
        throw DimensionError("AffineSymmetricMap: coefficient count != decision_dim");
      auto check_sym = [k](const RealMatrix& S) {
        detail::require_square(S.rows(), S.cols(), "AffineSymmetricMap");
        if (S.rows() != k) throw DimensionError("AffineSymmetricMap: block order mismatch");
        const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
        if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
          throw SymmetryError("AffineSymmetricMap: matrix not symmetric");
      };
      check_sym(blk.constant);
      for (const auto& C : blk.coeffs) check_sym(C);
    }
  }

  RealMatrix evaluate(std::size_t block_index, const RealVector& x) const {
    const AffineBlock& blk = blocks[block_index];
    RealMatrix F = blk.constant;
    for (Eigen::Index j = 0; j < decision_dim; ++j)
      if (x(j) != 0.0) F += x(j) * blk.coeffs[j];
    return F;
  }

  /// max over blocks of lambda_max(F_i(x)).
  double max_eig(const RealVector& x) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      Eigen::SelfAdjointEigenSolver<RealMatrix> es(evaluate(i, x), Eigen::EigenvaluesOnly);
      worst = std::max(worst, es.eigenvalues().maxCoeff());
    }
    return worst;
  }
};

enum class FeasibilityStatus {
  strictly_feasible,
  marginal,
  infeasible,
  numerical_failure,
};

struct FeasibilityOutcome {
  FeasibilityStatus status = FeasibilityStatus::numerical_failure;
  double margin = std::numeric_limits<double>::quiet_NaN();
  RealVector witness;
  int newton_steps = 0;
  std::string note;
};

struct SdpOptions {
  double tol_gap = 1e-7;
  int max_iters = 4000;            // total Newton-step budget
  double strictness = 1e-8;        // margin threshold separating strict from marginal
  double margin_clamp = -1e6;      // stop early once t descends below this
  double eta0 = 1.0;
  double eta_growth = 20.0;
};

namespace detail {

// One damped-Newton centering pass for  min eta*t + sum_i -logdet(t I - F_i(x)).
// Returns false on a numerical dead end (non-finite data, no descent).
struct BarrierWorkspace {
  std::vector<Eigen::LLT<RealMatrix>> llt;  // per block
};

inline bool blocks_feasible(const AffineSymmetricMap& map, const RealVector& x, double t,
                            std::vector<RealMatrix>* slacks) {
  for (std::size_t i = 0; i < map.blocks.size(); ++i) {
    const Eigen::Index k = map.blocks[i].constant.rows();
    RealMatrix Z = t * RealMatrix::Identity(k, k) - map.evaluate(i, x);
    Eigen::LLT<RealMatrix> llt(Z);
    if (llt.info() != Eigen::Success) return false;
    if (slacks) (*slacks)[i] = std::move(Z);
  }
  return true;
}

inline double barrier_value(const AffineSymmetricMap& map, const RealVector& x, double t,
                            double eta, bool* ok) {
  double val = eta * t;
  *ok = true;
  for (std::size_t i = 0; i < map.blocks.size(); ++i) {
    const Eigen::Index k = map.blocks[i].constant.rows();
    const RealMatrix Z = t * RealMatrix::Identity(k, k) - map.evaluate(i, x);
    Eigen::LLT<RealMatrix> llt(Z);
    if (llt.info() != Eigen::Success) {
      *ok = false;
      return std::numeric_limits<double>::infinity();
    }
    const RealMatrix& L = llt.matrixLLT();
    for (Eigen::Index d = 0; d < k; ++d) val -= 2.0 * std::log(L(d, d));
  }
  return val;
}

}  // namespace detail

/// Minimize max_i lambda_max(F_i(x)). The returned margin re-evaluates the
/// map at the witness, so it is attainable by construction; it lies within
/// tol_gap of the optimum unless the descent was clamped (strictly feasible
/// homogeneous problems are unbounded below and stop at margin_clamp).
inline FeasibilityOutcome minimize_max_eig(const AffineSymmetricMap& map,
                                           double tol_gap = 1e-7, int max_iters = 4000,
                                           const SdpOptions& base_opts = {}) {
  SdpOptions opts = base_opts;
  opts.tol_gap = tol_gap;
  opts.max_iters = max_iters;
  if (!(opts.tol_gap > 0.0)) throw std::invalid_argument("minimize_max_eig: tol_gap must be > 0");
  map.validate();

  const Eigen::Index p = map.decision_dim;
  const std::size_t nblocks = map.blocks.size();
  if (nblocks == 0) throw std::invalid_argument("minimize_max_eig: no blocks");

  Eigen::Index m_total = 0;
  for (const auto& blk : map.blocks) m_total += blk.constant.rows();

  RealVector x = RealVector::Zero(p);
  double t = map.max_eig(x) + 1.0;

  FeasibilityOutcome out;
  auto finish = [&]() {
    out.witness = x;
    out.margin = map.max_eig(x);
    if (out.margin < -opts.strictness)
      out.status = FeasibilityStatus::strictly_feasible;
    else if (out.margin <= opts.strictness)
      out.status = FeasibilityStatus::marginal;
    else
      out.status = FeasibilityStatus::infeasible;
    return out;
  };

  std::vector<RealMatrix> slacks(nblocks);
  double eta = opts.eta0;
  int total_newton = 0;

  while (true) {
    // center at the current eta
    for (int inner = 0; inner < 100; ++inner) {
      if (t < opts.margin_clamp) {
        out.note = "descent clamped; problem unbounded below";
        out.newton_steps = total_newton;
        return finish();
      }
      if (++total_newton > opts.max_iters) {
        out.status = FeasibilityStatus::numerical_failure;
        out.witness = x;
        out.margin = map.max_eig(x);
        out.newton_steps = total_newton;
        out.note = "Newton budget exhausted";
        return out;
      }

      if (!detail::blocks_feasible(map, x, t, &slacks)) {
        out.status = FeasibilityStatus::numerical_failure;
        out.witness = x;
        out.margin = map.max_eig(x);
        out.newton_steps = total_newton;
        out.note = "interior point lost strict feasibility";
        return out;
      }

      // gradient and Hessian of eta*t + sum -logdet Z_i over y = (x, t)
      RealVector grad = RealVector::Zero(p + 1);
      RealMatrix hess = RealMatrix::Zero(p + 1, p + 1);
      grad(p) = eta;
      for (std::size_t i = 0; i < nblocks; ++i) {
        const Eigen::Index k = map.blocks[i].constant.rows();
        Eigen::LLT<RealMatrix> llt(slacks[i]);
        const RealMatrix S = llt.solve(RealMatrix::Identity(k, k));  // Z^{-1}
        std::vector<RealMatrix> W(p + 1);
        for (Eigen::Index j = 0; j < p; ++j) W[j] = S * (-map.blocks[i].coeffs[j]);
        W[p] = S;
        for (Eigen::Index a = 0; a < p + 1; ++a) {
          grad(a) -= W[a].trace();
          for (Eigen::Index b = a; b < p + 1; ++b)
            hess(a, b) += (W[a].cwiseProduct(W[b].transpose())).sum();  // tr(W_a W_b)
        }
      }
      hess = hess.selfadjointView<Eigen::Upper>();

      if (!grad.allFinite() || !hess.allFinite()) {
        out.status = FeasibilityStatus::numerical_failure;
        out.witness = x;
        out.margin = map.max_eig(x);
        out.newton_steps = total_newton;
        out.note = "non-finite Newton data";
        return out;
      }

      // regularized Newton direction
      RealVector dir = RealVector::Zero(p + 1);
      double decrement = -1.0;
      double reg = 0.0;
      const double reg_scale = std::max(1.0, hess.trace() / double(p + 1));
      for (int attempt = 0; attempt < 8; ++attempt) {
        RealMatrix H = hess;
        if (reg > 0.0) H += reg * RealMatrix::Identity(p + 1, p + 1);
        Eigen::LDLT<RealMatrix> ldlt(H);
        const RealVector cand = ldlt.solve(-grad);
        if (ldlt.info() == Eigen::Success && cand.allFinite() &&
            -grad.dot(cand) >= 0.0) {
          dir = cand;
          decrement = -grad.dot(cand);
          break;
        }
        reg = (reg == 0.0) ? 1e-12 * reg_scale : reg * 100.0;
      }
      if (decrement < 0.0) {
        out.status = FeasibilityStatus::numerical_failure;
        out.witness = x;
        out.margin = map.max_eig(x);
        out.newton_steps = total_newton;
        out.note = "Newton solve failed";
        return out;
      }
      if (decrement * 0.5 < 1e-11) break;  // centered

      bool ok = false;
      const double f0 = detail::barrier_value(map, x, t, eta, &ok);
      double step = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        const RealVector xn = x + step * dir.head(p);
        const double tn = t + step * dir(p);
        bool fok = false;
        const double fn = detail::barrier_value(map, xn, tn, eta, &fok);
        if (fok && fn <= f0 - 0.25 * step * decrement) {
          x = xn;
          t = tn;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;  // no progress at this eta; tighten and retry
    }

    out.newton_steps = total_newton;
    if (double(m_total) / eta <= opts.tol_gap) return finish();
    eta *= opts.eta_growth;
  }
}

}  // namespace delaycert
