#include "doob/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace doob {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Linear: return "linear";
    case ScheduleKind::Cosine: return "cosine";
    case ScheduleKind::Custom: return "custom";
  }
  return "custom";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "cosine") return ScheduleKind::Cosine;
  if (name == "custom") return ScheduleKind::Custom;
  throw ConfigError("unknown schedule kind '" + name + "'");
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, Vector betas, double beta_1, double beta_N)
    : kind_(kind), betas_(std::move(betas)), beta_1_(beta_1), beta_N_(beta_N) {
  if (betas_.size() < 1) throw ConfigError("noise schedule needs at least one step");
  alpha_bars_.resize(betas_.size());
  double running = 1.0;
  for (Index k = 0; k < betas_.size(); ++k) {
    const double b = betas_[k];
    if (!(b > 0.0 && b < 1.0)) {
      throw ConfigError("beta_" + std::to_string(k + 1) + " = " + std::to_string(b) +
                        " is outside (0, 1)");
    }
    running *= 1.0 - b;
    alpha_bars_[k] = running;
  }
}

double NoiseSchedule::beta(int k) const {
  if (k < 1 || k > n_steps()) throw DomainError("step index out of range: " + std::to_string(k));
  return betas_[k - 1];
}

double NoiseSchedule::alpha_bar(int k) const {
  if (k == 0) return 1.0;
  if (k < 0 || k > n_steps()) throw DomainError("step index out of range: " + std::to_string(k));
  return alpha_bars_[k - 1];
}

double NoiseSchedule::sqrt_alpha_bar(int k) const { return std::sqrt(alpha_bar(k)); }

double NoiseSchedule::sqrt_one_minus_alpha_bar(int k) const {
  return std::sqrt(1.0 - alpha_bar(k));
}

NoiseSchedule make_linear_schedule(int n_steps, double beta_1, double beta_N) {
  if (n_steps < 1) throw ConfigError("linear schedule: n_steps must be >= 1");
  if (!(beta_1 > 0.0 && beta_1 <= beta_N && beta_N < 1.0)) {
    throw ConfigError("linear schedule: need 0 < beta_1 <= beta_N < 1");
  }
  Vector betas(n_steps);
  if (n_steps == 1) {
    betas[0] = beta_1;
  } else {
    for (int k = 0; k < n_steps; ++k) {
      const double w = static_cast<double>(k) / (n_steps - 1);
      betas[k] = (1.0 - w) * beta_1 + w * beta_N;
    }
    betas[n_steps - 1] = beta_N;
  }
  return NoiseSchedule(ScheduleKind::Linear, std::move(betas), beta_1, beta_N);
}

NoiseSchedule make_scaled_linear_schedule(int n_steps) {
  if (n_steps < 1) throw ConfigError("linear schedule: n_steps must be >= 1");
  const double beta_N = std::min(20.0 / n_steps, 0.999);
  return make_linear_schedule(n_steps, std::min(0.1 / n_steps, beta_N), beta_N);
}

NoiseSchedule make_cosine_schedule(int n_steps) {
  if (n_steps < 1) throw ConfigError("cosine schedule: n_steps must be >= 1");
  constexpr double offset = 0.008;
  constexpr double max_beta = 0.999;
  auto profile = [](double t) {
    const double c = std::cos((t + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = profile(0.0);
  Vector betas(n_steps);
  for (int k = 1; k <= n_steps; ++k) {
    const double prev = profile(static_cast<double>(k - 1) / n_steps) / f0;
    const double curr = profile(static_cast<double>(k) / n_steps) / f0;
    betas[k - 1] = std::min(1.0 - curr / prev, max_beta);
  }
  return NoiseSchedule(ScheduleKind::Cosine, std::move(betas));
}

NoiseSchedule make_custom_schedule(Vector betas) {
  return NoiseSchedule(ScheduleKind::Custom, std::move(betas));
}

double continuous_beta(const NoiseSchedule& schedule, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("continuous_beta: t must lie in [0, 1]");
  const int n = schedule.n_steps();
  auto rate = [&](int i) { return -n * std::log1p(-schedule.betas()[i]); };
  // Interval i covers [i/N, (i+1)/N]; its rate sits at the midpoint.
  const double pos = t * n - 0.5;
  if (pos <= 0.0) return rate(0);
  if (pos >= n - 1) return rate(n - 1);
  const int i = static_cast<int>(std::floor(pos));
  const double w = pos - i;
  return (1.0 - w) * rate(i) + w * rate(i + 1);
}

double integrated_beta(const NoiseSchedule& schedule) {
  return -std::log(schedule.alpha_bar(schedule.n_steps()));
}

}  // namespace doob
