#pragma once

#include <memory>
#include <span>
#include <utility>

#include "doob/oracle.hpp"
#include "doob/strategy.hpp"

namespace doob {

enum class GuidanceKind {
  Constant,       ///< gamma_k = gamma
  AlphaWeighted,  ///< gamma_k = ab_k (1 - ab_k)
  MomentMatched,  ///< gamma_k = beta_k / 2 with the residual weighted by (A Cov[x0|x_k] A^T + s^2 I)^-1
};

struct GuidanceSchedule {
  GuidanceKind kind = GuidanceKind::Constant;
  double gamma = 10.0;

  double scale(const NoiseSchedule& schedule, int k) const;
};

std::string to_string(GuidanceKind kind);
GuidanceKind guidance_kind_from_string(const std::string& name);

/// Which beta re-noises x_{k-1} back to x_k inside a RePaint loop.
enum class RepaintBeta {
  Previous,  ///< beta_{k-1}
  Current,   ///< beta_k
};

// --- step operations -------------------------------------------------------------------------

/// eps' = eps - sqrt(1 - ab_k) grad log h(k, x_k).
Matrix exact_h_step(const HTransform& h, const NoiseSchedule& schedule, int k, const Matrix& X,
                    const Matrix& eps_hat);

/// One guidance step x_k <- x_k - gamma_k grad_x l(y, A x0_hat(x_k)) with
/// l = ||y - A x0_hat||^2 (MomentMatched weights the residual by the predictive precision).
Matrix recon_guidance_step(const Observation& obs, const GuidanceSchedule& guidance,
                           const EpsModel& model, const NoiseSchedule& schedule, int k,
                           const Matrix& X, const Condition& cond = {},
                           bool stop_gradient = false);

/// Overwrites observed coordinates of x_{k-1} with sqrt(ab_{k-1}) y + sqrt(1 - ab_{k-1}) eta,
/// eta = 0 at k = 1. Draws one normal per observed coordinate per chain when k > 1.
void replacement_step(const Observation& obs, const NoiseSchedule& schedule, int k, Matrix& X,
                      std::span<Rng> rngs);

/// R inner passes of `inner` (which must include the replacement), re-noising x_{k-1} back
/// to step k between passes when k > 1.
Matrix repaint_step(int R, const NoiseSchedule& schedule, int k, const Matrix& X,
                    std::span<Rng> rngs, const ConditioningStrategy::InnerStep& inner,
                    RepaintBeta beta_index = RepaintBeta::Previous);

/// Sets observed coordinates to the clean motif; returns the per-coordinate step vector
/// (0 on the mask, k elsewhere).
std::pair<Matrix, Vector> rfdiff_sample_step(const Observation& obs, int k, const Matrix& X);

// --- strategies ------------------------------------------------------------------------------

class ExactHStrategy final : public ConditioningStrategy {
 public:
  explicit ExactHStrategy(HTransform h) : h_(std::move(h)) {}
  std::string name() const override { return "exact_h"; }
  void post_score(const StepContext& ctx, Matrix& X, Matrix& eps,
                  const Condition& cond) const override;
  const HTransform& h() const { return h_; }

 private:
  HTransform h_;
};

class ReconGuidanceStrategy final : public ConditioningStrategy {
 public:
  ReconGuidanceStrategy(Observation obs, GuidanceSchedule guidance, bool stop_gradient = false)
      : obs_(std::move(obs)), guidance_(guidance), stop_gradient_(stop_gradient) {}
  std::string name() const override { return "recon_guidance"; }
  void post_score(const StepContext& ctx, Matrix& X, Matrix& eps,
                  const Condition& cond) const override;

 private:
  Observation obs_;
  GuidanceSchedule guidance_;
  bool stop_gradient_;
};

class ReplacementStrategy final : public ConditioningStrategy {
 public:
  explicit ReplacementStrategy(Observation obs);
  std::string name() const override { return "replacement"; }
  void post_noise(const StepContext& ctx, Matrix& X) const override;

 private:
  Observation obs_;
};

class RepaintStrategy final : public ConditioningStrategy {
 public:
  RepaintStrategy(Observation obs, int repaints, RepaintBeta beta_index = RepaintBeta::Previous);
  std::string name() const override { return "repaint"; }
  void post_noise(const StepContext& ctx, Matrix& X) const override;
  Matrix outer_step(const StepContext& ctx, const Matrix& X,
                    const InnerStep& inner) const override;

 private:
  Observation obs_;
  int repaints_;
  RepaintBeta beta_index_;
};

/// Motif held clean with time 0 before every network call; needs a per-coordinate-time network.
class RfDiffStrategy final : public ConditioningStrategy {
 public:
  explicit RfDiffStrategy(Observation obs);
  std::string name() const override { return "rfdiff"; }
  void validate(const EpsModel& model) const override;
  Condition model_condition() const override;
  void pre_score(const StepContext& ctx, Matrix& X, Condition& cond) const override;
  void post_noise(const StepContext& ctx, Matrix& X) const override;

 private:
  Observation obs_;
};

/// Passes the condition straight to a conditionally trained network.
class AmortisedStrategy final : public ConditioningStrategy {
 public:
  explicit AmortisedStrategy(const Observation& obs);
  explicit AmortisedStrategy(Condition cond) : cond_(std::move(cond)) {}
  std::string name() const override { return "amortised"; }
  void validate(const EpsModel& model) const override;
  Condition model_condition() const override { return cond_; }

 private:
  Condition cond_;
};

enum class FinetuneMode {
  Residual,  ///< eps' = eps_theta + eps_phi (offline finetuning)
  Control,   ///< eps' = eps_theta - sqrt(1 - ab_k) f_phi (stochastic-control finetuning)
};

/// Adds a finetuned correction network to a frozen base model.
class FinetunedHStrategy final : public ConditioningStrategy {
 public:
  FinetunedHStrategy(std::shared_ptr<const EpsModel> correction, FinetuneMode mode,
                     Condition correction_condition = {});
  std::string name() const override { return "finetuned_h"; }
  void post_score(const StepContext& ctx, Matrix& X, Matrix& eps,
                  const Condition& cond) const override;

 private:
  std::shared_ptr<const EpsModel> correction_;
  FinetuneMode mode_;
  Condition correction_condition_;
};

}  // namespace doob
