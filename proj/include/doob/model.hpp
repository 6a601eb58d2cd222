#pragma once

#include <string>
#include <vector>

#include "doob/schedule.hpp"
#include "doob/types.hpp"

namespace doob {

/// What extra input a noise predictor consumes besides (x_k, k).
enum class ConditionKind {
  None,    ///< unconditional
  Aux,     ///< auxiliary variable y (classifier-free style)
  Masked,  ///< observed coordinates x0[M] together with the mask M
};

/// Condition handed to a noise predictor for a whole batch of chains.
struct Condition {
  ConditionKind kind = ConditionKind::None;
  Vector values;      ///< Aux: y. Masked: length d, read only where mask == 1.
  Vector mask;        ///< Masked: 0/1 per coordinate.
  Vector coord_time;  ///< Optional per-coordinate step index (0 on a clean motif).

  static Condition none() { return {}; }
  static Condition aux(Vector y);
  static Condition masked(Vector values, Vector mask);
};

struct ModelCaps {
  ConditionKind accepts = ConditionKind::None;
  bool per_coordinate_time = false;
};

/// Noise predictor eps_hat(x_k, k[, condition]) evaluated over a batch of columns.
///
/// This is the engine's native parametrisation. Implementations must be safe to call
/// concurrently from several threads.
class EpsModel {
 public:
  virtual ~EpsModel() = default;

  virtual Index dim() const = 0;
  virtual ModelCaps caps() const = 0;
  virtual std::string describe() const = 0;

  /// eps_hat for every column of X at step k.
  virtual Matrix eps(const NoiseSchedule& schedule, int k, const Matrix& X,
                     const Condition& cond) const = 0;

  /// Columns of J^T V where J is the Jacobian of eps_hat w.r.t. x at the matching column of X.
  virtual Matrix eps_vjp(const NoiseSchedule& schedule, int k, const Matrix& X,
                         const Condition& cond, const Matrix& V) const = 0;

  /// eps_hat with a separate step index per column. The default groups columns by step.
  virtual Matrix eps_mixed(const NoiseSchedule& schedule, const std::vector<int>& steps,
                           const Matrix& X, const Condition& cond) const;
};

/// score = -eps / sqrt(1 - alpha_bar_k)
Matrix eps_to_score(const NoiseSchedule& schedule, int k, const Matrix& eps);
Matrix score_to_eps(const NoiseSchedule& schedule, int k, const Matrix& score);

/// Tweedie posterior mean E[X0 | X_k = x] = (x - sqrt(1 - ab) eps_hat) / sqrt(ab).
/// Throws NumericalError when alpha_bar_k < 1e-12.
Matrix tweedie_denoise(const EpsModel& model, const NoiseSchedule& schedule, int k,
                       const Matrix& X, const Condition& cond = {});

/// Columns of J^T V for the Tweedie map x -> x0_hat(x). With `stop_gradient` the network
/// Jacobian is dropped and only the explicit x / sqrt(ab) term remains.
Matrix tweedie_vjp(const EpsModel& model, const NoiseSchedule& schedule, int k, const Matrix& X,
                   const Condition& cond, const Matrix& V, bool stop_gradient = false);

}  // namespace doob
