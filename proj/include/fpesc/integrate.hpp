#pragma once

#include <Eigen/Core>
#include <cmath>

#include "fpesc/errors.hpp"

namespace fpesc {

// Fixed-step classical RK4. The horizon must be an exact multiple of dt so
// that evaluation stamps always land on grid nodes.
struct IntegratorSpec {
  double dt = 1e-3;
  double T = 0.0;

  int steps() const {
    if (dt <= 0.0) throw ConfigError("integrator dt must be positive");
    if (T < 0.0) throw ConfigError("integrator horizon must be >= 0");
    long n = std::lround(T / dt);
    if (std::abs(n * dt - T) > 1e-9 * std::max(1.0, std::abs(T)))
      throw ConfigError("integrator horizon must be an exact multiple of dt");
    return static_cast<int>(n);
  }
};

// Step count for an intermediate time t on the same grid.
inline int grid_steps(double t, double dt) {
  long n = std::lround(t / dt);
  if (n < 0 || std::abs(n * dt - t) > 1e-9 * std::max(1.0, std::abs(t)))
    throw OffGridError("time is not a nonnegative multiple of dt");
  return static_cast<int>(n);
}

// Reusable stage buffers; rhs(t, y, dy) fills dy.
class Rk4 {
 public:
  explicit Rk4(Eigen::Index n) : k1_(n), k2_(n), k3_(n), k4_(n), tmp_(n) {}

  template <class Rhs>
  void step(Rhs&& rhs, double t, double h, Eigen::VectorXd& y) {
    rhs(t, y, k1_);
    tmp_ = y + (0.5 * h) * k1_;
    rhs(t + 0.5 * h, tmp_, k2_);
    tmp_ = y + (0.5 * h) * k2_;
    rhs(t + 0.5 * h, tmp_, k3_);
    tmp_ = y + h * k3_;
    rhs(t + h, tmp_, k4_);
    y += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

  // step that also reports the derivative at the step's start
  template <class Rhs>
  void step_with_start_derivative(Rhs&& rhs, double t, double h,
                                  Eigen::VectorXd& y, Eigen::VectorXd& f0) {
    rhs(t, y, k1_);
    f0 = k1_;
    tmp_ = y + (0.5 * h) * k1_;
    rhs(t + 0.5 * h, tmp_, k2_);
    tmp_ = y + (0.5 * h) * k2_;
    rhs(t + 0.5 * h, tmp_, k3_);
    tmp_ = y + h * k3_;
    rhs(t + h, tmp_, k4_);
    y += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

 private:
  Eigen::VectorXd k1_, k2_, k3_, k4_, tmp_;
};

inline bool all_finite(const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) return false;
  return true;
}

}  // namespace fpesc
