#pragma once

#include <cmath>

#include "doob/nets.hpp"

namespace doob {

/// First-order optimizer over a flat parameter vector.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, Index n_params)
      : kind_(kind), m_(Vector::Zero(n_params)), v_(Vector::Zero(n_params)) {}

  void step(Vector& params, const Vector& grad, double lr) {
    if (kind_ == OptimizerKind::Sgd) {
      params -= lr * grad;
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    m_ = b1 * m_ + (1.0 - b1) * grad;
    v_ = b2 * v_ + (1.0 - b2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, t_);
    const double c2 = 1.0 - std::pow(b2, t_);
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
  }

 private:
  OptimizerKind kind_;
  Vector m_;
  Vector v_;
  int t_ = 0;
};

/// Linearly decayed learning rate at optimizer step `step` of `total`.
inline double decayed_lr(double lr, double final_fraction, int step, int total) {
  if (total <= 1) return lr;
  const double w = static_cast<double>(step) / (total - 1);
  return lr * ((1.0 - w) + w * final_fraction);
}

}  // namespace doob
