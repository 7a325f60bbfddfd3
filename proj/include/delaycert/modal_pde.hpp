#pragma once

/// Desk-scale spectral model of a diagonal boundary control system and its
/// closed-loop simulation under delayed predictor feedback.
///
/// The concrete instance is the 1-d reaction-diffusion equation
///   y_t = a y_xx + c y   on (0, L),   Dirichlet boundary values as inputs,
/// whose modal data is
///   lambda_n = c - a n^2 pi^2 / L^2,
///   phi_n(x) = psi_n(x) = sqrt(2/L) sin(n pi x / L),
///   b_{n,1} = a n pi sqrt(2/L^3),   b_{n,2} = (-1)^{n+1} b_{n,1}.
///
/// The simulated modal ODEs are c_n' = lambda_n c_n + b_{n,.} u(t - D(t)),
/// with the control generated by the predictor on the first N0 modes. The
/// stepping core is shared with the finite-dimensional loop, so truncating
/// the simulation basis to N0 reproduces that loop exactly.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "delaycert/certify.hpp"
#include "delaycert/csv.hpp"
#include "delaycert/delay_sim.hpp"
#include "delaycert/linalg.hpp"

namespace delaycert {

struct ReactionDiffusionConfig {
  double a = 0.5;  // diffusivity
  double c = 0.5;  // reaction rate
  double L = 2.0 * M_PI;

  void validate() const {
    if (!(a > 0.0 && c > 0.0 && L > 0.0))
      throw std::invalid_argument("ReactionDiffusionConfig: a, c, L must be > 0");
  }
};

inline double eigenvalue(const ReactionDiffusionConfig& cfg, int n) {
  if (n < 1) throw std::invalid_argument("eigenvalue: n >= 1");
  return cfg.c - cfg.a * double(n) * double(n) * M_PI * M_PI / (cfg.L * cfg.L);
}

inline std::pair<double, double> input_coefficients(const ReactionDiffusionConfig& cfg,
                                                    int n) {
  if (n < 1) throw std::invalid_argument("input_coefficients: n >= 1");
  const double b1 = cfg.a * double(n) * M_PI * std::sqrt(2.0 / std::pow(cfg.L, 3));
  const double sign = (n % 2 == 1) ? 1.0 : -1.0;  // (-1)^{n+1}
  return {b1, sign * b1};
}

inline double eigenfunction(const ReactionDiffusionConfig& cfg, int n, double x) {
  return std::sqrt(2.0 / cfg.L) * std::sin(double(n) * M_PI * x / cfg.L);
}

/// (A_{N0}, B_{N0}) — diagonal eigenvalue matrix and boundary input rows.
inline std::pair<RealMatrix, RealMatrix> truncated_matrices(
    const ReactionDiffusionConfig& cfg, int N0) {
  if (N0 < 1) throw std::invalid_argument("truncated_matrices: N0 >= 1");
  cfg.validate();
  RealMatrix A = RealMatrix::Zero(N0, N0);
  RealMatrix B(N0, 2);
  for (int n = 1; n <= N0; ++n) {
    A(n - 1, n - 1) = eigenvalue(cfg, n);
    const auto [b1, b2] = input_coefficients(cfg, n);
    B(n - 1, 0) = b1;
    B(n - 1, 1) = b2;
  }
  return {A, B};
}

/// Residual spectral gap alpha = -lambda_{N0+1}; the first residual mode must
/// be stable.
inline double spectral_gap(const ReactionDiffusionConfig& cfg, int N0) {
  const double lam = eigenvalue(cfg, N0 + 1);
  if (!(lam < 0.0))
    throw AssumptionError("spectral_gap: residual mode " + std::to_string(N0 + 1) +
                          " is not stable");
  return -lam;
}

/// Generic diagonal spectral data; the reaction-diffusion family fills this
/// in, and user-supplied sequences can too.
struct SpectralSystem {
  Spectrum eigenvalues;       // lambda_1 .. lambda_{N_sim}
  ComplexMatrix input_coeffs;  // N_sim x m
  int N0 = 1;
  int N_sim = 1;
  double alpha = 0.0;         // residual gap
  double riesz_lower = 1.0;   // m_R
  double riesz_upper = 1.0;   // M_R

  void validate() const {
    if (N0 < 1 || N_sim < N0)
      throw std::invalid_argument("SpectralSystem: need 1 <= N0 <= N_sim");
    if (eigenvalues.size() < N_sim || input_coeffs.rows() < N_sim)
      throw DimensionError("SpectralSystem: sequences shorter than N_sim");
    if (!(riesz_lower > 0.0 && riesz_upper >= riesz_lower))
      throw std::invalid_argument("SpectralSystem: invalid Riesz bounds");
    for (int n = N0; n < N_sim; ++n)
      if (!(eigenvalues(n).real() <= -alpha + 1e-12))
        throw AssumptionError("SpectralSystem: residual mode violates the gap");
  }

  bool is_real() const {
    return eigenvalues.imag().cwiseAbs().maxCoeff() == 0.0 &&
           input_coeffs.imag().cwiseAbs().maxCoeff() == 0.0;
  }
};

inline SpectralSystem make_reaction_diffusion_system(const ReactionDiffusionConfig& cfg,
                                                     int N0, int N_sim) {
  cfg.validate();
  if (N0 < 1 || N_sim < N0)
    throw std::invalid_argument("make_reaction_diffusion_system: need 1 <= N0 <= N_sim");
  SpectralSystem sys;
  sys.N0 = N0;
  sys.N_sim = N_sim;
  sys.eigenvalues.resize(N_sim);
  sys.input_coeffs.resize(N_sim, 2);
  for (int n = 1; n <= N_sim; ++n) {
    sys.eigenvalues(n - 1) = eigenvalue(cfg, n);
    const auto [b1, b2] = input_coefficients(cfg, n);
    sys.input_coeffs(n - 1, 0) = b1;
    sys.input_coeffs(n - 1, 1) = b2;
  }
  sys.alpha = spectral_gap(cfg, N0);
  sys.validate();
  return sys;
}

/// Modal coefficients of an initial profile: c_n(0) = <X0, psi_n> by
/// composite Simpson quadrature (default 4001 points).
inline RealVector project_initial(const ReactionDiffusionConfig& cfg,
                                  const std::function<double(double)>& X0, int N_sim,
                                  int points = 4001) {
  cfg.validate();
  if (N_sim < 1) throw std::invalid_argument("project_initial: N_sim >= 1");
  if (points < 2001) points = 2001;
  if (points % 2 == 0) ++points;  // Simpson needs an even interval count
  const double h = cfg.L / double(points - 1);
  RealVector coeffs = RealVector::Zero(N_sim);
  for (int n = 1; n <= N_sim; ++n) {
    double acc = 0.0;
    for (int k = 0; k < points; ++k) {
      const double x = double(k) * h;
      const double f = X0(x) * eigenfunction(cfg, n, x);
      const double w = (k == 0 || k == points - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
      acc += w * f;
    }
    coeffs(n - 1) = acc * h / 3.0;
  }
  return coeffs;
}

struct ModalTrajectory {
  std::vector<double> times;
  RealMatrix coeffs;      // N_sim x samples
  RealMatrix u;           // m x samples, predictor output
  RealMatrix u_delayed;   // m x samples, boundary input u(t - D(t))
  RealMatrix z;           // N0 x samples, transformed truncated state
  RealVector delay_values;
  RealVector phi_values;
  RealVector x_grid;      // reconstruction grid on [0, L]
  RealMatrix field;       // x_grid.size() x samples, y(t, x)

  /// ||Y(t)|| + ||u(t)|| with Y the first N0 coefficients.
  std::vector<double> truncated_norm_series(int N0) const {
    std::vector<double> out(times.size());
    for (std::size_t k = 0; k < times.size(); ++k)
      out[k] = coeffs.col(k).head(N0).norm() + u.col(k).norm();
    return out;
  }
};

/// Closed-loop modal simulation: all N_sim modes driven by the delayed
/// boundary input, control generated by the predictor on the first N0 modes.
/// Requires A_{N0} + B_{N0} K Hurwitz unless K = 0 (open-loop diagnostics).
inline ModalTrajectory simulate_pde_closed_loop(
    const ReactionDiffusionConfig& cfg, int N0, int N_sim, const RealMatrix& K, double D0,
    const DelaySignal& delay, const TransitionSignal& phi,
    const std::function<double(double)>& X0, double T, double h, int x_grid_points = 201) {
  cfg.validate();
  if (N_sim < N0) throw std::invalid_argument("simulate_pde_closed_loop: N_sim >= N0");
  const auto [A0, B0] = truncated_matrices(cfg, N0);
  if (K.rows() != 2 || K.cols() != N0)
    throw DimensionError("simulate_pde_closed_loop: K must be 2 x N0 transposed view (m x N0)");
  if (K.cwiseAbs().maxCoeff() != 0.0 && !is_hurwitz(RealMatrix(A0 + B0 * K)))
    throw PreconditionError("simulate_pde_closed_loop: A_N0 + B_N0 K is not Hurwitz");

  detail::PredictorLoopSetup setup;
  setup.A_plant = RealMatrix::Zero(N_sim, N_sim);
  setup.B_plant = RealMatrix(N_sim, 2);
  for (int n = 1; n <= N_sim; ++n) {
    setup.A_plant(n - 1, n - 1) = eigenvalue(cfg, n);
    const auto [b1, b2] = input_coefficients(cfg, n);
    setup.B_plant(n - 1, 0) = b1;
    setup.B_plant(n - 1, 1) = b2;
  }
  setup.A_pred = A0;
  setup.B_pred = B0;
  setup.K = K;
  setup.delay = delay;
  setup.phi = phi;
  setup.x0 = project_initial(cfg, X0, N_sim);
  setup.D0 = D0;
  setup.T = T;
  setup.h = h;
  const Trajectory traj = detail::run_predictor_loop(setup);

  ModalTrajectory out;
  out.times = traj.times;
  out.coeffs = traj.x;
  out.u = traj.u;
  out.u_delayed = traj.u_delayed;
  out.z = traj.z;
  out.delay_values = traj.delay_values;
  out.phi_values = traj.phi_values;

  if (x_grid_points < 2) x_grid_points = 2;
  out.x_grid.resize(x_grid_points);
  for (int i = 0; i < x_grid_points; ++i)
    out.x_grid(i) = cfg.L * double(i) / double(x_grid_points - 1);
  RealMatrix basis(x_grid_points, N_sim);
  for (int n = 1; n <= N_sim; ++n)
    for (int i = 0; i < x_grid_points; ++i)
      basis(i, n - 1) = eigenfunction(cfg, n, out.x_grid(i));
  out.field = basis * out.coeffs;
  return out;
}

/// Maximal certified delay deviation for the truncated model
/// (M = A_{N0} + B_{N0} K, N = e^{D0 A_{N0}} B_{N0} K).
inline MaxDeltaResult certify_pde(const ReactionDiffusionConfig& cfg, int N0,
                                  const RealMatrix& K, double D0, double kappa,
                                  double tol = 1e-4) {
  const auto [A0, B0] = truncated_matrices(cfg, N0);
  const CertificationProblem prob = build_problem(A0, B0, K, D0, kappa);
  return max_delta(prob, tol);
}

/// Certification of a generic spectral truncation; complex data is realified.
inline MaxDeltaResult certify_spectral(const SpectralSystem& sys, const ComplexMatrix& K,
                                       double D0, double kappa, double tol = 1e-4) {
  sys.validate();
  const ComplexMatrix A0 =
      ComplexMatrix(sys.eigenvalues.head(sys.N0).asDiagonal());
  const ComplexMatrix B0 = sys.input_coeffs.topRows(sys.N0);
  if (sys.is_real() && K.imag().cwiseAbs().maxCoeff() == 0.0) {
    const CertificationProblem prob =
        build_problem(RealMatrix(A0.real()), RealMatrix(B0.real()),
                      RealMatrix(K.real()), D0, kappa);
    return max_delta(prob, tol);
  }
  const CertificationProblem prob = build_problem(A0, B0, K, D0, kappa);
  return max_delta(prob, tol);
}

/// Modal CSV: t, c_1..c_{N_sim}, utilde_1..utilde_m.
inline void write_modal_csv(const std::string& path, const ModalTrajectory& traj) {
  CsvWriter csv(path);
  std::vector<std::string> names{"t"};
  for (Eigen::Index n = 0; n < traj.coeffs.rows(); ++n)
    names.push_back("c_" + std::to_string(n + 1));
  for (Eigen::Index i = 0; i < traj.u_delayed.rows(); ++i)
    names.push_back("utilde_" + std::to_string(i + 1));
  csv.header(names);
  std::vector<double> row;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    row.clear();
    row.push_back(traj.times[k]);
    for (Eigen::Index n = 0; n < traj.coeffs.rows(); ++n) row.push_back(traj.coeffs(n, k));
    for (Eigen::Index i = 0; i < traj.u_delayed.rows(); ++i)
      row.push_back(traj.u_delayed(i, k));
    csv.row(row);
  }
}

/// Field CSV in long format: t, x, y(t, x).
inline void write_field_csv(const std::string& path, const ModalTrajectory& traj,
                            std::size_t time_stride = 1) {
  CsvWriter csv(path);
  csv.header({"t", "x", "y"});
  for (std::size_t k = 0; k < traj.times.size(); k += time_stride)
    for (Eigen::Index i = 0; i < traj.x_grid.size(); ++i)
      csv.row({traj.times[k], traj.x_grid(i), traj.field(i, k)});
}

}  // namespace delaycert
