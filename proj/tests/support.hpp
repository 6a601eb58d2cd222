#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "doob/types.hpp"

namespace doob::test {

/// Central finite-difference gradient of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h = 1e-5) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

/// Relative error with an absolute floor so that near-zero entries do not dominate.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Simpson's rule on [lo, hi] with n (even) intervals, long-double accumulation.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int n) {
  const long double h = (static_cast<long double>(hi) - lo) / n;
  long double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0L : 2.0L) * f(static_cast<double>(lo + i * h));
  return static_cast<double>(s * h / 3.0L);
}

inline Vector vec1(double v) { return Vector::Constant(1, v); }

inline double normal_pdf(double x, double m, double var) {
  return std::exp(-0.5 * (x - m) * (x - m) / var) / std::sqrt(2 * M_PI * var);
}

}  // namespace doob::test
