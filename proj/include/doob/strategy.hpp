#pragma once

#include <functional>
#include <span>
#include <string>

#include "doob/model.hpp"
#include "doob/rng.hpp"
#include "doob/schedule.hpp"

namespace doob {

/// What a hook sees during one reverse step of a block of chains. Column j of every matrix
/// belongs to the chain that owns rngs[j].
struct StepContext {
  const NoiseSchedule& schedule;
  const EpsModel& model;
  int k;
  std::span<Rng> rngs;
};

/// Per-step hooks through which a conditioning scheme intervenes in ancestral sampling.
///
/// One inner step at index k runs
///   pre_score -> eps = model(x_k) -> post_score -> reverse drift -> post_drift
///   -> add sigma_k z (k > 1) -> post_noise
/// and outer_step decides how often the inner step runs (RePaint loops it).
/// Implementations hold immutable configuration only, so one instance serves all threads.
class ConditioningStrategy {
 public:
  using InnerStep = std::function<Matrix(const Matrix&)>;

  virtual ~ConditioningStrategy() = default;

  virtual std::string name() const = 0;
  /// Throws ConfigError when the strategy cannot run with this model.
  virtual void validate(const EpsModel& model) const;
  /// Condition fed to the noise predictor at every step.
  virtual Condition model_condition() const { return {}; }

  virtual void pre_score(const StepContext&, Matrix& /*x_k*/, Condition& /*cond*/) const {}
  virtual void post_score(const StepContext&, Matrix& /*x_k*/, Matrix& /*eps*/,
                          const Condition& /*cond*/) const {}
  virtual void post_drift(const StepContext&, Matrix& /*x_km1*/) const {}
  virtual void post_noise(const StepContext&, Matrix& /*x_km1*/) const {}

  virtual Matrix outer_step(const StepContext&, const Matrix& x_k, const InnerStep& inner) const {
    return inner(x_k);
  }
};

/// Plain unconditional sampling; every hook is a no-op.
class NullStrategy final : public ConditioningStrategy {
 public:
  std::string name() const override { return "null"; }
};

}  // namespace doob
