#pragma once

/// Time-varying delay signals and the smooth controller ramp-in.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "delaycert/errors.hpp"

namespace delaycert {

/// Smooth 0 -> 1 ramp: the unique quintic with f(0)=f'(0)=f''(0)=0,
/// f(t0)=1, f'(t0)=f''(t0)=0; clamped outside [0, t0].
inline double quintic_transition(double t, double t0) {
  if (!(t0 > 0.0)) throw std::invalid_argument("quintic_transition: t0 must be > 0");
  const double s = std::clamp(t / t0, 0.0, 1.0);
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

struct TransitionSignal {
  double t0 = 0.5;  // seconds

  double operator()(double t) const { return quintic_transition(t, t0); }
};

/// Uncertain time-varying delay D(t), kept within [D0 - delta, D0 + delta].
struct DelaySignal {
  enum class Kind { constant, sinusoid, table };

  Kind kind = Kind::constant;
  double D0 = 1.0;         // seconds
  double amplitude = 0.0;  // seconds (sinusoid)
  double omega = 0.0;      // rad/s
  double phase = 0.0;      // rad
  std::vector<std::pair<double, double>> table;  // (time, value), sorted

  static DelaySignal constant(double D0) {
    DelaySignal d;
    d.kind = Kind::constant;
    d.D0 = D0;
    return d;
  }

  static DelaySignal sinusoid(double D0, double amplitude, double omega, double phase = 0.0) {
    DelaySignal d;
    d.kind = Kind::sinusoid;
    d.D0 = D0;
    d.amplitude = amplitude;
    d.omega = omega;
    d.phase = phase;
    return d;
  }

  static DelaySignal from_table(double D0, std::vector<std::pair<double, double>> samples) {
    DelaySignal d;
    d.kind = Kind::table;
    d.D0 = D0;
    d.table = std::move(samples);
    if (d.table.empty()) throw std::invalid_argument("DelaySignal: empty table");
    for (std::size_t i = 1; i < d.table.size(); ++i)
      if (!(d.table[i].first > d.table[i - 1].first))
        throw std::invalid_argument("DelaySignal: table times must increase");
    return d;
  }

  double operator()(double t) const {
    switch (kind) {
      case Kind::constant:
        return D0;
      case Kind::sinusoid:
        return D0 + amplitude * std::sin(omega * t + phase);
      case Kind::table: {
        if (t <= table.front().first) return table.front().second;
        if (t >= table.back().first) return table.back().second;
        auto it = std::upper_bound(table.begin(), table.end(), t,
                                   [](double v, const auto& s) { return v < s.first; });
        const auto& [t1, v1] = *it;
        const auto& [t0_, v0] = *(it - 1);
        const double w = (t - t0_) / (t1 - t0_);
        return v0 + w * (v1 - v0);
      }
    }
    return D0;
  }

  /// Declared deviation bound delta with |D(t) - D0| <= delta.
  double max_deviation() const {
    switch (kind) {
      case Kind::constant:
        return 0.0;
      case Kind::sinusoid:
        return std::abs(amplitude);
      case Kind::table: {
        double dev = 0.0;
        for (const auto& [t, v] : table) dev = std::max(dev, std::abs(v - D0));
        return dev;
      }
    }
    return 0.0;
  }
};

}  // namespace delaycert
