#include "doob/special.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace doob::special {

double log_phi(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

double Phi(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_Phi(double z) {
  if (z == -std::numeric_limits<double>::infinity()) return -std::numeric_limits<double>::infinity();
  if (z > -30.0) return std::log(Phi(z));
  // Lower-tail asymptotic series of the Mills ratio: Phi(z) = phi(z)/|z| * (1 - 1/z^2 + 3/z^4 - ...).
  const double x2 = 1.0 / (z * z);
  const double series = 1.0 - x2 * (1.0 - 3.0 * x2 * (1.0 - 5.0 * x2 * (1.0 - 7.0 * x2)));
  return log_phi(z) - std::log(-z) + std::log(series);
}

double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

double log_sub_exp(double a, double b) {
  if (b == -std::numeric_limits<double>::infinity()) return a;
  if (b >= a) return -std::numeric_limits<double>::infinity();
  return a + std::log1p(-std::exp(b - a));
}

double log_Phi_diff(double lo, double hi) {
  if (!(lo < hi)) return -std::numeric_limits<double>::infinity();
  // Work in whichever tail keeps both terms away from 1.
  if (lo > 0.0) return log_sub_exp(log_Phi(-lo), log_Phi(-hi));
  if (hi < 0.0) return log_sub_exp(log_Phi(hi), log_Phi(lo));
  // Interval straddles zero: 1 - Phi(lo) - Phi(-hi) with both terms <= 1/2.
  return std::log1p(-Phi(lo) - Phi(-hi));
}

}  // namespace doob::special
