#pragma once

#include <string>

#include "doob/types.hpp"

namespace doob {

enum class ScheduleKind { Linear, Cosine, Custom };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// Discrete variance-preserving noise schedule.
///
/// Steps are 1-based: beta(k) and alpha_bar(k) for k in [1, N]. alpha_bar(0) == 1 so that
/// forward noising at k = 0 is the identity. Step k corresponds to continuous time t = k / N.
/// Immutable after construction.
class NoiseSchedule {
 public:
  NoiseSchedule(ScheduleKind kind, Vector betas, double beta_1 = 0.0, double beta_N = 0.0);

  int n_steps() const { return static_cast<int>(betas_.size()); }
  ScheduleKind kind() const { return kind_; }
  /// Linear endpoints as constructed (zero for other kinds).
  double beta_first() const { return beta_1_; }
  double beta_last() const { return beta_N_; }

  double beta(int k) const;
  double alpha_bar(int k) const;
  double sqrt_alpha_bar(int k) const;
  double sqrt_one_minus_alpha_bar(int k) const;

  const Vector& betas() const { return betas_; }
  const Vector& alpha_bars() const { return alpha_bars_; }

 private:
  ScheduleKind kind_;
  Vector betas_;
  Vector alpha_bars_;
  double beta_1_;
  double beta_N_;
};

/// betas linearly spaced from beta_1 to beta_N inclusive.
NoiseSchedule make_linear_schedule(int n_steps, double beta_1, double beta_N);

/// Linear schedule whose endpoints scale as 0.1 / N and 20 / N (capped at 0.999), so that
/// N = 1000 gives the usual 1e-4 .. 0.02 and shorter chains keep a comparable total noise.
NoiseSchedule make_scaled_linear_schedule(int n_steps);

/// Squared-cosine alpha_bar profile with offset 0.008, betas clipped to 0.999.
NoiseSchedule make_cosine_schedule(int n_steps);

NoiseSchedule make_custom_schedule(Vector betas);

/// Continuous-time rate beta(t) = -d/dt ln alpha_bar(t), t in [0, 1].
///
/// Piecewise-linear interpolation of the per-interval rates N * (-ln(1 - beta_k)), placed at
/// interval midpoints and held constant beyond the first/last midpoint.
double continuous_beta(const NoiseSchedule& schedule, double t);

/// Integral of beta(s) over [0, 1], i.e. -ln alpha_bar_N.
double integrated_beta(const NoiseSchedule& schedule);

}  // namespace doob
