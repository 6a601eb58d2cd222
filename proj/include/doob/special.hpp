#pragma once

namespace doob::special {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// Standard normal log-density.
double log_phi(double z);
/// Standard normal CDF.
double Phi(double z);
/// log Phi(z), accurate in the far lower tail.
double log_Phi(double z);

/// log(Phi(hi) - Phi(lo)) for lo < hi; either bound may be infinite.
double log_Phi_diff(double lo, double hi);

/// log(exp(a) - exp(b)) for a >= b.
double log_sub_exp(double a, double b);
double log_add_exp(double a, double b);

}  // namespace doob::special
