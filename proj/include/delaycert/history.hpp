#pragma once

/// Uniform-grid history of a vector signal with pre-origin zero extension and
/// cubic Hermite lookups. Used for the stored control input (slopes estimated
/// by central differences once the next sample arrives) and for delayed-state
/// dynamics (slopes supplied exactly by the integrator).
///
/// The delayed argument t - D(t) is generally non-monotone in t, so lookups
/// are random access; nothing here assumes FIFO order.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "delaycert/errors.hpp"

namespace delaycert {

class HistoryBuffer {
 public:
  enum class SlopeMode { finite_difference, exact };

  HistoryBuffer(Eigen::Index dim, double step, double origin,
                SlopeMode mode = SlopeMode::finite_difference)
      : dim_(dim), step_(step), origin_(origin), mode_(mode) {
    if (!(step > 0.0)) throw std::invalid_argument("HistoryBuffer: step must be > 0");
  }

  Eigen::Index dim() const { return dim_; }
  double step() const { return step_; }
  double origin() const { return origin_; }
  std::size_t size() const { return samples_.size(); }
  double newest_time() const {
    return origin_ + step_ * double(samples_.empty() ? 0 : samples_.size() - 1);
  }

  /// Append the sample at origin + size * step. In finite-difference mode the
  /// previous sample's slope is upgraded to a central difference.
  void append(const Eigen::VectorXd& value) {
    if (mode_ != SlopeMode::finite_difference)
      throw std::logic_error("HistoryBuffer: exact mode requires a derivative");
    require_dim(value);
    samples_.push_back(value);
    slopes_.emplace_back(dim_);
    const std::size_t k = samples_.size() - 1;
    if (k >= 1) slopes_[k] = (samples_[k] - samples_[k - 1]) / step_;
    if (k >= 2) slopes_[k - 1] = (samples_[k] - samples_[k - 2]) / (2.0 * step_);
    if (k == 0) slopes_[0].setZero();
    if (k == 1) slopes_[0] = slopes_[1];
  }

  void append(const Eigen::VectorXd& value, const Eigen::VectorXd& derivative) {
    if (mode_ != SlopeMode::exact)
      throw std::logic_error("HistoryBuffer: finite-difference mode computes its own slopes");
    require_dim(value);
    require_dim(derivative);
    samples_.push_back(value);
    slopes_.push_back(derivative);
  }

  const Eigen::VectorXd& sample(std::size_t index) const { return samples_[index]; }

  /// Signal value at time t. Before the origin the signal is identically
  /// zero; past the newest sample is an error. On-grid times return the
  /// stored sample; off-grid times use cubic Hermite (linear on the first
  /// interval, where no settled slope exists).
  Eigen::VectorXd value_at(double t) const {
    if (t <= origin_ + 1e-12 * step_) {
      if (t >= origin_ - 1e-12 * step_ && !samples_.empty()) return samples_.front();
      return Eigen::VectorXd::Zero(dim_);
    }
    const double pos = (t - origin_) / step_;
    const double newest = double(samples_.size() - 1);
    if (pos > newest + 1e-9)
      throw std::out_of_range("HistoryBuffer: lookup past the stored span");
    const auto nearest = static_cast<std::size_t>(std::llround(pos));
    if (std::abs(pos - double(nearest)) < 1e-9 && nearest < samples_.size())
      return samples_[nearest];

    const auto i = static_cast<std::size_t>(pos);
    const std::size_t j = std::min(i + 1, samples_.size() - 1);
    const double s = pos - double(i);
    const Eigen::VectorXd& y0 = samples_[i];
    const Eigen::VectorXd& y1 = samples_[j];
    if (i == 0) return y0 + s * (y1 - y0);  // linear fallback on the first interval
    const Eigen::VectorXd m0 = step_ * slopes_[i];
    const Eigen::VectorXd m1 = step_ * slopes_[j];
    const double s2 = s * s, s3 = s2 * s;
    return (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 +
           (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
  }

 private:
  void require_dim(const Eigen::VectorXd& v) const {
    if (v.size() != dim_) throw DimensionError("HistoryBuffer: sample dimension");
  }

  Eigen::Index dim_;
  double step_;
  double origin_;
  SlopeMode mode_;
  std::vector<Eigen::VectorXd> samples_;
  std::vector<Eigen::VectorXd> slopes_;
};

}  // namespace delaycert
