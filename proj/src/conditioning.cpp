#include "doob/conditioning.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace doob {

namespace {

void require_hard_mask(const Observation& obs, const std::string& who) {
  if (obs.kind() != OperatorKind::Mask || !obs.is_hard()) {
    throw ConfigError(who + " requires a mask operator with a hard constraint (noise_std = 0)");
  }
}

}  // namespace

double GuidanceSchedule::scale(const NoiseSchedule& schedule, int k) const {
  switch (kind) {
    case GuidanceKind::Constant: return gamma;
    case GuidanceKind::AlphaWeighted: {
      const double ab = schedule.alpha_bar(k);
      return ab * (1.0 - ab);
    }
    case GuidanceKind::MomentMatched: return 0.5 * schedule.beta(k);
  }
  return gamma;
}

std::string to_string(GuidanceKind kind) {
  switch (kind) {
    case GuidanceKind::Constant: return "constant";
    case GuidanceKind::AlphaWeighted: return "alpha_weighted";
    case GuidanceKind::MomentMatched: return "moment_matched";
  }
  return "constant";
}

GuidanceKind guidance_kind_from_string(const std::string& name) {
  if (name == "constant") return GuidanceKind::Constant;
  if (name == "alpha_weighted") return GuidanceKind::AlphaWeighted;
  if (name == "moment_matched") return GuidanceKind::MomentMatched;
  throw ConfigError("unknown guidance kind '" + name + "'");
}

Matrix exact_h_step(const HTransform& h, const NoiseSchedule& schedule, int k, const Matrix& X,
                    const Matrix& eps_hat) {
  const HBatch hb = h_value_and_grad(h, schedule, k, X);
  return eps_hat - schedule.sqrt_one_minus_alpha_bar(k) * hb.grad_log_h;
}

Matrix recon_guidance_step(const Observation& obs, const GuidanceSchedule& guidance,
                           const EpsModel& model, const NoiseSchedule& schedule, int k,
                           const Matrix& X, const Condition& cond, bool stop_gradient) {
  if (guidance.kind != GuidanceKind::MomentMatched && guidance.gamma < 0.0) {
    throw ConfigError("guidance gamma must be >= 0");
  }
  const double gamma = guidance.scale(schedule, k);
  if (gamma == 0.0) return X;
  const Matrix& A = obs.op();
  const Matrix x0 = tweedie_denoise(model, schedule, k, X, cond);
  Matrix resid = (-(A * x0)).colwise() + obs.y();  // y - A x0_hat

  if (guidance.kind == GuidanceKind::MomentMatched) {
    // Cov[x0 | x_k] = (1 - ab) / sqrt(ab) * d x0_hat / d x_k  (second-order Tweedie).
    const Index n = A.rows();
    const Index B = X.cols();
    const double ab = schedule.alpha_bar(k);
    const double c = (1.0 - ab) / std::sqrt(ab);
    std::vector<Matrix> acov(static_cast<std::size_t>(n));  // row i: (A J^T A^T e_i)^T per chain
    for (Index i = 0; i < n; ++i) {
      const Matrix V = A.row(i).transpose().replicate(1, B);
      acov[static_cast<std::size_t>(i)] =
          A * tweedie_vjp(model, schedule, k, X, cond, V, stop_gradient);
    }
    const double s2 = obs.noise_std() * obs.noise_std();
    for (Index b = 0; b < B; ++b) {
      Matrix G(n, n);
      for (Index i = 0; i < n; ++i) G.col(i) = c * acov[static_cast<std::size_t>(i)].col(b);
      G = 0.5 * (G + G.transpose());
      G.diagonal().array() += s2;
      Eigen::LDLT<Matrix> ldlt(G);
      resid.col(b) = ldlt.solve(resid.col(b));
    }
  }

  // grad_x ||y - A x0_hat||^2 = -2 J^T A^T (y - A x0_hat)
  const Matrix grad =
      -2.0 * tweedie_vjp(model, schedule, k, X, cond, A.transpose() * resid, stop_gradient);
  return X - gamma * grad;
}

void replacement_step(const Observation& obs, const NoiseSchedule& schedule, int k, Matrix& X,
                      std::span<Rng> rngs) {
  require_hard_mask(obs, "replacement");
  const double s = schedule.sqrt_alpha_bar(k - 1);
  const double t = std::sqrt(1.0 - schedule.alpha_bar(k - 1));
  const auto& idx = obs.observed();
  for (Index j = 0; j < X.cols(); ++j) {
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double eta = k > 1 ? rngs[static_cast<std::size_t>(j)].normal() : 0.0;
      X(idx[r], j) = s * obs.y()[static_cast<Index>(r)] + t * eta;
    }
  }
}

Matrix repaint_step(int R, const NoiseSchedule& schedule, int k, const Matrix& X,
                    std::span<Rng> rngs, const ConditioningStrategy::InnerStep& inner,
                    RepaintBeta beta_index) {
  if (R < 1) throw ConfigError("repaint count R must be >= 1");
  Matrix x_k = X;
  Matrix x_prev;
  for (int r = 1; r <= R; ++r) {
    x_prev = inner(x_k);
    if (r < R && k > 1) {
      const double b = schedule.beta(beta_index == RepaintBeta::Previous ? k - 1 : k);
      const double keep = std::sqrt(1.0 - b);
      const double add = std::sqrt(b);
      for (Index j = 0; j < x_prev.cols(); ++j) {
        x_k.col(j) = keep * x_prev.col(j) +
                     add * rngs[static_cast<std::size_t>(j)].normal_vector(x_prev.rows());
      }
    }
  }
  return x_prev;
}

std::pair<Matrix, Vector> rfdiff_sample_step(const Observation& obs, int k, const Matrix& X) {
  require_hard_mask(obs, "rfdiff sampling");
  Matrix out = X;
  Vector times = Vector::Constant(X.rows(), static_cast<double>(k));
  const auto& idx = obs.observed();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(idx[r]).setConstant(obs.y()[static_cast<Index>(r)]);
    times[idx[r]] = 0.0;
  }
  return {std::move(out), std::move(times)};
}

// --- strategies ------------------------------------------------------------------------------

void ExactHStrategy::post_score(const StepContext& ctx, Matrix& X, Matrix& eps,
                                const Condition&) const {
  eps = exact_h_step(h_, ctx.schedule, ctx.k, X, eps);
}

void ReconGuidanceStrategy::post_score(const StepContext& ctx, Matrix& X, Matrix&,
                                       const Condition& cond) const {
  X = recon_guidance_step(obs_, guidance_, ctx.model, ctx.schedule, ctx.k, X, cond,
                          stop_gradient_);
}

ReplacementStrategy::ReplacementStrategy(Observation obs) : obs_(std::move(obs)) {
  require_hard_mask(obs_, "replacement");
}

void ReplacementStrategy::post_noise(const StepContext& ctx, Matrix& X) const {
  replacement_step(obs_, ctx.schedule, ctx.k, X, ctx.rngs);
}

RepaintStrategy::RepaintStrategy(Observation obs, int repaints, RepaintBeta beta_index)
    : obs_(std::move(obs)), repaints_(repaints), beta_index_(beta_index) {
  require_hard_mask(obs_, "repaint");
  if (repaints_ < 1) throw ConfigError("repaint count R must be >= 1");
}

void RepaintStrategy::post_noise(const StepContext& ctx, Matrix& X) const {
  replacement_step(obs_, ctx.schedule, ctx.k, X, ctx.rngs);
}

Matrix RepaintStrategy::outer_step(const StepContext& ctx, const Matrix& X,
                                   const InnerStep& inner) const {
  return repaint_step(repaints_, ctx.schedule, ctx.k, X, ctx.rngs, inner, beta_index_);
}

RfDiffStrategy::RfDiffStrategy(Observation obs) : obs_(std::move(obs)) {
  require_hard_mask(obs_, "rfdiff sampling");
}

void RfDiffStrategy::validate(const EpsModel& model) const {
  if (!model.caps().per_coordinate_time) {
    throw ConfigError("rfdiff sampling needs a network with per-coordinate time input");
  }
}

Condition RfDiffStrategy::model_condition() const {
  return Condition::masked(obs_.scattered_y(), obs_.mask_vector());
}

void RfDiffStrategy::pre_score(const StepContext& ctx, Matrix& X, Condition& cond) const {
  auto [clean, times] = rfdiff_sample_step(obs_, ctx.k, X);
  X = std::move(clean);
  cond.coord_time = std::move(times);
}

void RfDiffStrategy::post_noise(const StepContext& ctx, Matrix& X) const {
  if (ctx.k == 1) X = rfdiff_sample_step(obs_, 1, X).first;
}

AmortisedStrategy::AmortisedStrategy(const Observation& obs) {
  if (obs.kind() != OperatorKind::Mask) {
    throw ConfigError("amortised sampling conditions on masked coordinates; need a mask operator");
  }
  cond_ = Condition::masked(obs.scattered_y(), obs.mask_vector());
}

void AmortisedStrategy::validate(const EpsModel& model) const {
  const auto caps = model.caps();
  if (caps.per_coordinate_time) {
    throw ConfigError("amortised sampling cannot drive a per-coordinate-time network");
  }
  if (caps.accepts != cond_.kind || cond_.kind == ConditionKind::None) {
    throw ConfigError("amortised sampling needs a network trained for this condition type");
  }
}

FinetunedHStrategy::FinetunedHStrategy(std::shared_ptr<const EpsModel> correction,
                                       FinetuneMode mode, Condition correction_condition)
    : correction_(std::move(correction)),
      mode_(mode),
      correction_condition_(std::move(correction_condition)) {
  if (!correction_) throw ConfigError("finetuned_h needs a correction network");
}

void FinetunedHStrategy::post_score(const StepContext& ctx, Matrix& X, Matrix& eps,
                                    const Condition&) const {
  const Matrix c = correction_->eps(ctx.schedule, ctx.k, X, correction_condition_);
  if (mode_ == FinetuneMode::Residual) {
    eps += c;
  } else {
    eps -= ctx.schedule.sqrt_one_minus_alpha_bar(ctx.k) * c;
  }
}

}  // namespace doob
