#pragma once

/// Closed-loop simulation of the delayed LTI plant under constant-delay
/// predictor feedback with a smooth ramp-in:
///
///   x'(t) = A x(t) + B u(t - D(t)),           u = 0 on [-D0 - delta, 0]
///   u(t)  = phi(t) K { e^{D0 A} x(t) + int_{t-D0}^{t} e^{(t-s)A} B u(s) ds }
///
/// Fixed-step RK4 on the plant state; the predictor integral is composite
/// trapezoid on the integration grid, which makes u(t) = phi(t) K z(t) hold
/// exactly at grid points (the endpoint term gives a tiny m x m linear solve
/// for u(t)). Delayed lookups interpolate the stored input history; the
/// delayed argument may be non-monotone.
///
/// The same stepping core drives the modal PDE loop, where the predictor only
/// sees the leading coordinates of a larger plant state.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "delaycert/csv.hpp"
#include "delaycert/errors.hpp"
#include "delaycert/history.hpp"
#include "delaycert/linalg.hpp"
#include "delaycert/signals.hpp"

namespace delaycert {

inline double default_step(double t0, double D0, double delta) {
  return std::min(t0, D0 - delta) / 50.0;
}

/// Grid trapezoid for z(t) = e^{D0 A} x(t) + int_0^{D0} e^{s A} B u(t - s) ds.
/// Node matrices e^{j h A} B are cached; a fractional tail handles D0 not a
/// multiple of h.
class ArtsteinQuadrature {
 public:
  ArtsteinQuadrature(const RealMatrix& A, const RealMatrix& B, double D0, double h)
      : D0_(D0), h_(h) {
    detail::require_square(A.rows(), A.cols(), "ArtsteinQuadrature");
    if (B.rows() != A.rows()) throw DimensionError("ArtsteinQuadrature: B row count");
    if (!(D0 > 0.0) || !(h > 0.0))
      throw std::invalid_argument("ArtsteinQuadrature: D0 and h must be > 0");
    segments_ = static_cast<long>(std::floor(D0 / h + 1e-9));
    if (segments_ < 1) throw std::invalid_argument("ArtsteinQuadrature: h > D0");
    frac_ = D0 - double(segments_) * h;
    if (frac_ < 1e-10 * h) frac_ = 0.0;
    exp_D0_ = mat_exp(A, D0);
    const RealMatrix Eh = mat_exp(A, h);
    nodes_.reserve(segments_ + 1);
    nodes_.push_back(B);
    for (long j = 1; j <= segments_; ++j) nodes_.push_back(Eh * nodes_.back());
    tail_node_ = exp_D0_ * B;
  }

  const RealMatrix& exp_D0() const { return exp_D0_; }
  double endpoint_weight() const { return 0.5 * h_; }

  /// Integral excluding the s = 0 endpoint term (which involves u(t) itself).
  Eigen::VectorXd integral_past(const HistoryBuffer& u_hist, double t) const {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(nodes_.front().rows());
    for (long j = 1; j <= segments_; ++j) {
      const double wj =
          (j < segments_) ? h_ : (frac_ == 0.0 ? 0.5 * h_ : 0.5 * (h_ + frac_));
      acc += wj * (nodes_[j] * u_hist.value_at(t - double(j) * h_));
    }
    if (frac_ > 0.0) acc += 0.5 * frac_ * (tail_node_ * u_hist.value_at(t - D0_));
    return acc;
  }

  /// Full transform given the current state and input history (the u(t)
  /// endpoint is read from the history, so the newest sample must cover t).
  Eigen::VectorXd transform(const Eigen::VectorXd& x, const HistoryBuffer& u_hist,
                            double t) const {
    if (t > u_hist.newest_time() + 1e-9 * h_)
      throw std::out_of_range("artstein_transform: history does not cover t");
    return exp_D0_ * x + integral_past(u_hist, t) +
           endpoint_weight() * (nodes_.front() * u_hist.value_at(t));
  }

 private:
  double D0_, h_, frac_ = 0.0;
  long segments_ = 0;
  RealMatrix exp_D0_;
  RealMatrix tail_node_;  // e^{D0 A} B
  std::vector<RealMatrix> nodes_;  // e^{j h A} B
};

/// z(t) = e^{D0 A} x(t) + int_{t-D0}^t e^{(t-s)A} B u(s) ds with composite
/// trapezoid on the history grid.
inline Eigen::VectorXd artstein_transform(const Eigen::VectorXd& x,
                                          const HistoryBuffer& u_hist, const RealMatrix& A,
                                          const RealMatrix& B, double D0, double t) {
  const ArtsteinQuadrature quad(A, B, D0, u_hist.step());
  return quad.transform(x, u_hist, t);
}

struct Trajectory {
  std::vector<double> times;
  RealMatrix x;          // n_plant x samples
  RealMatrix u;          // m x samples
  RealMatrix z;          // n_pred x samples
  RealMatrix u_delayed;  // m x samples, the plant input u(t - D(t))
  RealVector delay_values;
  RealVector phi_values;
};

struct StateImpulse {
  double time = 0.0;
  RealVector offset;
};

namespace detail {

struct PredictorLoopSetup {
  RealMatrix A_plant, B_plant;  // n_p x n_p, n_p x m
  RealMatrix A_pred, B_pred;    // n_0 x n_0, n_0 x m
  RealMatrix K;                 // m x n_0
  DelaySignal delay;
  TransitionSignal phi;
  RealVector x0;
  double D0 = 1.0;
  double T = 10.0;
  double h = 0.01;
  std::optional<StateImpulse> impulse;  // test hook: jolt the plant state once
};

inline void check_grid(double value, double h, const char* name) {
  const double ratio = value / h;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio))
    throw std::invalid_argument(std::string("simulate: h must divide ") + name);
}

inline Trajectory run_predictor_loop(const PredictorLoopSetup& cfg) {
  const Eigen::Index n_p = cfg.A_plant.rows();
  const Eigen::Index n_0 = cfg.A_pred.rows();
  const Eigen::Index m = cfg.B_plant.cols();
  require_square(cfg.A_plant.rows(), cfg.A_plant.cols(), "run_predictor_loop");
  require_square(cfg.A_pred.rows(), cfg.A_pred.cols(), "run_predictor_loop");
  if (cfg.B_plant.rows() != n_p || cfg.B_pred.rows() != n_0 || cfg.B_pred.cols() != m ||
      cfg.K.rows() != m || cfg.K.cols() != n_0 || cfg.x0.size() != n_p || n_0 > n_p)
    throw DimensionError("run_predictor_loop: inconsistent shapes");

  const double delta = cfg.delay.max_deviation();
  if (!(cfg.D0 > 0.0)) throw std::invalid_argument("simulate: D0 must be > 0");
  if (!(delta < cfg.D0))
    throw std::invalid_argument("simulate: delay deviation must stay below D0");
  if (!(cfg.h > 0.0) || cfg.h > (cfg.D0 - delta) / 10.0 * (1.0 + 1e-12))
    throw std::invalid_argument("simulate: need h <= (D0 - delta)/10");
  check_grid(cfg.phi.t0, cfg.h, "t0");
  check_grid(cfg.T, cfg.h, "T");

  const long steps = static_cast<long>(std::llround(cfg.T / cfg.h));
  const ArtsteinQuadrature quad(cfg.A_pred, cfg.B_pred, cfg.D0, cfg.h);
  const RealMatrix KB = cfg.K * cfg.B_pred;  // m x m

  HistoryBuffer u_hist(m, cfg.h, 0.0, HistoryBuffer::SlopeMode::finite_difference);

  Trajectory traj;
  traj.times.resize(steps + 1);
  traj.x.resize(n_p, steps + 1);
  traj.u.resize(m, steps + 1);
  traj.z.resize(n_0, steps + 1);
  traj.u_delayed.resize(m, steps + 1);
  traj.delay_values.resize(steps + 1);
  traj.phi_values.resize(steps + 1);

  RealVector x = cfg.x0;

  // delayed plant input, zero before the origin
  auto delayed_input = [&](double s) -> RealVector {
    const double arg = s - cfg.delay(s);
    if (arg <= 0.0) return RealVector::Zero(m);
    return u_hist.value_at(arg);
  };
  auto rhs = [&](double s, const RealVector& state) -> RealVector {
    return cfg.A_plant * state + cfg.B_plant * delayed_input(s);
  };

  long impulse_step = -1;
  if (cfg.impulse) {
    impulse_step = static_cast<long>(std::llround(cfg.impulse->time / cfg.h));
    if (cfg.impulse->offset.size() != n_p)
      throw DimensionError("run_predictor_loop: impulse dimension");
  }

  for (long k = 0; k <= steps; ++k) {
    const double t = double(k) * cfg.h;
    if (k == impulse_step) x += cfg.impulse->offset;

    // control value at the grid point: u = phi K (Phi y + I_past + w0 B u)
    const double phi_t = cfg.phi(t);
    const RealVector y = x.head(n_0);
    const RealVector base = quad.exp_D0() * y + quad.integral_past(u_hist, t);
    RealVector u_t;
    if (phi_t == 0.0) {
      u_t = RealVector::Zero(m);
    } else {
      const RealMatrix S =
          RealMatrix::Identity(m, m) - phi_t * quad.endpoint_weight() * KB;
      u_t = S.partialPivLu().solve(phi_t * (cfg.K * base));
    }
    u_hist.append(u_t);
    const RealVector z_t = base + quad.endpoint_weight() * (cfg.B_pred * u_t);

    traj.times[k] = t;
    traj.x.col(k) = x;
    traj.u.col(k) = u_t;
    traj.z.col(k) = z_t;
    traj.u_delayed.col(k) = delayed_input(t);
    traj.delay_values(k) = cfg.delay(t);
    traj.phi_values(k) = phi_t;

    if (k == steps) break;

    const RealVector k1 = rhs(t, x);
    const RealVector k2 = rhs(t + 0.5 * cfg.h, RealVector(x + 0.5 * cfg.h * k1));
    const RealVector k3 = rhs(t + 0.5 * cfg.h, RealVector(x + 0.5 * cfg.h * k2));
    const RealVector k4 = rhs(t + cfg.h, RealVector(x + cfg.h * k3));
    x += (cfg.h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw DivergenceError(t + cfg.h);
  }
  return traj;
}

}  // namespace detail

/// Simulate the closed loop of the delayed plant under predictor feedback.
inline Trajectory simulate_closed_loop(const RealMatrix& A, const RealMatrix& B,
                                       const RealMatrix& K, double D0,
                                       const DelaySignal& delay, const TransitionSignal& phi,
                                       const RealVector& x0, double T, double h,
                                       const std::optional<StateImpulse>& impulse = {}) {
  detail::PredictorLoopSetup cfg;
  cfg.A_plant = A;
  cfg.B_plant = B;
  cfg.A_pred = A;
  cfg.B_pred = B;
  cfg.K = K;
  cfg.delay = delay;
  cfg.phi = phi;
  cfg.x0 = x0;
  cfg.D0 = D0;
  cfg.T = T;
  cfg.h = h;
  cfg.impulse = impulse;
  return detail::run_predictor_loop(cfg);
}

struct ZOdeTrajectory {
  std::vector<double> times;
  RealMatrix z;
};

/// Integrate the transformed dynamics directly (cross-validation of the
/// primal simulation):
///   z'(t) = (A + phi(t) BK) z(t)
///           + e^{D0 A} B K { [phi z](t - D(t)) - [phi z](t - D0) }.
/// The history seed supplies z before t = 0; with a standard transition
/// signal phi vanishes there, so the seed is inert unless phi is customized.
inline ZOdeTrajectory simulate_z_ode(
    const RealMatrix& A, const RealMatrix& B, const RealMatrix& K, double D0,
    const DelaySignal& delay, const TransitionSignal& phi, const RealVector& z0,
    const std::function<RealVector(double)>& z_history_seed, double T, double h) {
  detail::require_square(A.rows(), A.cols(), "simulate_z_ode");
  const Eigen::Index n = A.rows();
  if (B.rows() != n || K.cols() != n || K.rows() != B.cols() || z0.size() != n)
    throw DimensionError("simulate_z_ode: inconsistent shapes");
  const double delta = delay.max_deviation();
  if (!(delta < D0)) throw std::invalid_argument("simulate_z_ode: delay deviation");
  if (!(h > 0.0) || h > (D0 - delta) / 10.0 * (1.0 + 1e-12))
    throw std::invalid_argument("simulate_z_ode: need h <= (D0 - delta)/10");
  detail::check_grid(phi.t0, h, "t0");
  detail::check_grid(T, h, "T");

  const RealMatrix BK = B * K;
  const RealMatrix Ntilde = mat_exp(A, D0) * BK;
  const long steps = static_cast<long>(std::llround(T / h));

  HistoryBuffer z_hist(n, h, 0.0, HistoryBuffer::SlopeMode::exact);

  auto phi_z = [&](double s) -> RealVector {
    const double w = phi(s);
    if (w == 0.0) return RealVector::Zero(n);
    if (s < 0.0)
      return z_history_seed ? RealVector(w * z_history_seed(s)) : RealVector::Zero(n);
    return w * z_hist.value_at(s);
  };
  auto rhs = [&](double s, const RealVector& z) -> RealVector {
    return (A + phi(s) * BK) * z + Ntilde * (phi_z(s - delay(s)) - phi_z(s - D0));
  };

  ZOdeTrajectory out;
  out.times.resize(steps + 1);
  out.z.resize(n, steps + 1);
  RealVector z = z0;
  for (long k = 0; k <= steps; ++k) {
    const double t = double(k) * h;
    const RealVector k1 = rhs(t, z);
    z_hist.append(z, k1);
    out.times[k] = t;
    out.z.col(k) = z;
    if (k == steps) break;
    const RealVector k2 = rhs(t + 0.5 * h, RealVector(z + 0.5 * h * k1));
    const RealVector k3 = rhs(t + 0.5 * h, RealVector(z + 0.5 * h * k2));
    const RealVector k4 = rhs(t + h, RealVector(z + h * k3));
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!z.allFinite()) throw DivergenceError(t + h);
  }
  return out;
}

struct DecayFit {
  double rate = 0.0;          // 1/s, negated slope of the log fit
  double log_intercept = 0.0;
};

/// Least-squares line through (t, log(value)) over [t_start, t_end]. Trailing
/// (and any post-zero) samples are dropped so the log stays defined; at least
/// 10 samples must remain.
inline DecayFit fit_decay_series(const std::vector<double>& times,
                                 const std::vector<double>& values, double t_start,
                                 double t_end) {
  if (times.size() != values.size())
    throw DimensionError("fit_decay_series: times/values length mismatch");
  std::vector<double> ts, ys;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t_start || times[i] > t_end) continue;
    if (!(values[i] > 0.0)) break;  // shrink the window to the last positive sample
    ts.push_back(times[i]);
    ys.push_back(std::log(values[i]));
  }
  if (ts.size() < 10)
    throw std::invalid_argument("fit_decay_series: fewer than 10 usable samples");
  const double n = double(ts.size());
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sy += ys[i];
    stt += ts[i] * ts[i];
    sty += ts[i] * ys[i];
  }
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  DecayFit fit;
  fit.rate = -slope;
  fit.log_intercept = (sy - slope * st) / n;
  return fit;
}

/// Decay fit of log(||x(t)|| + ||u(t)||) over a window of the trajectory.
inline DecayFit fit_decay(const Trajectory& traj, double t_start, double t_end) {
  std::vector<double> norms(traj.times.size());
  for (std::size_t i = 0; i < traj.times.size(); ++i)
    norms[i] = traj.x.col(i).norm() + traj.u.col(i).norm();
  return fit_decay_series(traj.times, norms, t_start, t_end);
}

/// Trajectory export: t, x_1..x_n, u_1..u_m, z_1..z_n, D(t), phi(t).
inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  CsvWriter csv(path);
  std::vector<std::string> names{"t"};
  for (Eigen::Index i = 0; i < traj.x.rows(); ++i)
    names.push_back("x_" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < traj.u.rows(); ++i)
    names.push_back("u_" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < traj.z.rows(); ++i)
    names.push_back("z_" + std::to_string(i + 1));
  names.push_back("D(t)");
  names.push_back("phi(t)");
  csv.header(names);
  std::vector<double> row;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    row.clear();
    row.push_back(traj.times[k]);
    for (Eigen::Index i = 0; i < traj.x.rows(); ++i) row.push_back(traj.x(i, k));
    for (Eigen::Index i = 0; i < traj.u.rows(); ++i) row.push_back(traj.u(i, k));
    for (Eigen::Index i = 0; i < traj.z.rows(); ++i) row.push_back(traj.z(i, k));
    row.push_back(traj.delay_values(k));
    row.push_back(traj.phi_values(k));
    csv.row(row);
  }
}

}  // namespace delaycert
