#include <cmath>

#include "doob/engine.hpp"
#include "doob/nets.hpp"
#include "doob/optim.hpp"

namespace doob {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

double loss_and_grad(const EpsNet& net, const LossBatch& batch, Vector* grad) {
  const Index B = batch.input.cols();
  Mlp<double>::Tape tape;
  const Matrix pred = net.mlp().forward(batch.input, tape);
  const Matrix diff = pred - batch.target;
  const double loss = (batch.weight.array() * diff.array().square()).sum() / B;
  if (grad) {
    const Matrix dY = (2.0 / B) * batch.weight.cwiseProduct(diff);
    net.mlp().backward(tape, dY, grad);
  }
  return loss;
}

namespace {

void check_p_drop(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p_drop must lie in [0, 1]");
}

struct Draw {
  Vector x0;
  int k;
  Vector eps;
};

Draw draw_example(const DataSampler& data, const NoiseSchedule& schedule, Rng& rng) {
  Draw d;
  d.x0 = data(rng);
  d.k = rng.uniform_int(1, schedule.n_steps());
  d.eps = rng.normal_vector(d.x0.size());
  return d;
}

Vector draw_mask(const MaskSampler& masks, Index dim, double p_drop, Rng& side) {
  const bool drop = side.bernoulli(p_drop);
  if (drop) return Vector::Zero(dim);
  return masks(side);
}

TrainResult run_training(EpsNet& net, const TrainConfig& cfg,
                         const std::function<LossBatch(Rng&, Rng&)>& make_batch) {
  if (cfg.steps < 0) throw ConfigError("training steps must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  check_p_drop(cfg.p_drop);
  Rng rng(cfg.seed, 0);
  Rng side(cfg.seed, 1);
  Optimizer opt(cfg.optimizer, net.mlp().n_params());
  TrainResult result;
  result.loss.reserve(static_cast<std::size_t>(cfg.steps));
  Vector grad(net.mlp().n_params());
  for (int s = 0; s < cfg.steps; ++s) {
    const LossBatch batch = make_batch(rng, side);
    grad.setZero();
    const double loss = loss_and_grad(net, batch, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw TrainingDivergence("training diverged at step " + std::to_string(s) +
                               " (loss = " + std::to_string(loss) + ")");
    }
    opt.step(net.mlp().params(), grad,
             decayed_lr(cfg.learning_rate, cfg.lr_final_fraction, s, cfg.steps));
    result.loss.push_back(loss);
    if (cfg.hook && cfg.hook_every > 0 && (s + 1) % cfg.hook_every == 0) cfg.hook(s + 1, net);
  }
  return result;
}

}  // namespace

LossBatch make_unconditional_batch(const EpsNet& net, const DataSampler& data,
                                   const NoiseSchedule& schedule, Index batch, Rng& rng) {
  const Index d = net.dim();
  const int N = schedule.n_steps();
  Matrix X(d, batch), E(d, batch), C(net.condition_channels(), batch);
  Vector t(batch);
  for (Index b = 0; b < batch; ++b) {
    const Draw ex = draw_example(data, schedule, rng);
    X.col(b) = schedule.sqrt_alpha_bar(ex.k) * ex.x0 +
               schedule.sqrt_one_minus_alpha_bar(ex.k) * ex.eps;
    E.col(b) = ex.eps;
    t[b] = static_cast<double>(ex.k) / N;
    C.col(b) = net.channels_for(Condition::none(), t[b], N);
  }
  return {net.encode(X, t, C), E, Matrix::Ones(d, batch)};
}

LossBatch make_amortised_batch(const EpsNet& net, const DataSampler& data,
                               const MaskSampler& masks, const NoiseSchedule& schedule,
                               Index batch, double p_drop, Rng& rng, Rng& side) {
  const Index d = net.dim();
  const int N = schedule.n_steps();
  Matrix X(d, batch), E(d, batch), C(net.condition_channels(), batch);
  Vector t(batch);
  for (Index b = 0; b < batch; ++b) {
    const Draw ex = draw_example(data, schedule, rng);
    const Vector mask = draw_mask(masks, d, p_drop, side);
    X.col(b) = schedule.sqrt_alpha_bar(ex.k) * ex.x0 +
               schedule.sqrt_one_minus_alpha_bar(ex.k) * ex.eps;
    E.col(b) = ex.eps;
    t[b] = static_cast<double>(ex.k) / N;
    C.col(b) = net.channels_for(Condition::masked(ex.x0, mask), t[b], N);
  }
  return {net.encode(X, t, C), E, Matrix::Ones(d, batch)};
}

LossBatch make_classifier_free_batch(const EpsNet& net, const JointSampler& data,
                                     const NoiseSchedule& schedule, Index batch, double p_drop,
                                     Rng& rng, Rng& side) {
  const Index d = net.dim();
  const int N = schedule.n_steps();
  Matrix X(d, batch), E(d, batch), C(net.condition_channels(), batch);
  Vector t(batch);
  for (Index b = 0; b < batch; ++b) {
    auto [x0, y] = data(rng);
    const int k = rng.uniform_int(1, N);
    const Vector eps = rng.normal_vector(d);
    const bool drop = side.bernoulli(p_drop);
    X.col(b) = schedule.sqrt_alpha_bar(k) * x0 + schedule.sqrt_one_minus_alpha_bar(k) * eps;
    E.col(b) = eps;
    t[b] = static_cast<double>(k) / N;
    C.col(b) = net.channels_for(drop ? Condition::none() : Condition::aux(y), t[b], N);
  }
  return {net.encode(X, t, C), E, Matrix::Ones(d, batch)};
}

LossBatch make_rfdiff_batch(const EpsNet& net, const DataSampler& data, const MaskSampler& masks,
                            const NoiseSchedule& schedule, Index batch, double p_drop, Rng& rng,
                            Rng& side) {
  const Index d = net.dim();
  const int N = schedule.n_steps();
  Matrix X(d, batch), E(d, batch), W(d, batch), C(net.condition_channels(), batch);
  Vector t(batch);
  for (Index b = 0; b < batch; ++b) {
    const Draw ex = draw_example(data, schedule, rng);
    const Vector mask = draw_mask(masks, d, p_drop, side);
    Condition cond = Condition::masked(ex.x0, mask);
    cond.coord_time = Vector::Constant(d, ex.k);
    for (Index i = 0; i < d; ++i) {
      const bool motif = mask[i] > 0.5;
      X(i, b) = motif ? ex.x0[i]
                      : schedule.sqrt_alpha_bar(ex.k) * ex.x0[i] +
                            schedule.sqrt_one_minus_alpha_bar(ex.k) * ex.eps[i];
      W(i, b) = motif ? 0.0 : 1.0;
      if (motif) cond.coord_time[i] = 0.0;
    }
    E.col(b) = ex.eps;
    t[b] = static_cast<double>(ex.k) / N;
    C.col(b) = net.channels_for(cond, t[b], N);
  }
  return {net.encode(X, t, C), E, W};
}

LossBatch make_finetune_batch(const EpsModel& frozen, const EpsNet& h_net,
                              const DataSampler& data, const MaskSampler& masks,
                              const NoiseSchedule& schedule, Index batch, double p_drop, Rng& rng,
                              Rng& side) {
  const Index d = h_net.dim();
  const int N = schedule.n_steps();
  Matrix X(d, batch), E(d, batch), C(h_net.condition_channels(), batch);
  Vector t(batch);
  std::vector<int> steps(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    const Draw ex = draw_example(data, schedule, rng);
    const Vector mask = draw_mask(masks, d, p_drop, side);
    X.col(b) = schedule.sqrt_alpha_bar(ex.k) * ex.x0 +
               schedule.sqrt_one_minus_alpha_bar(ex.k) * ex.eps;
    E.col(b) = ex.eps;
    steps[static_cast<std::size_t>(b)] = ex.k;
    t[b] = static_cast<double>(ex.k) / N;
    C.col(b) = h_net.channels_for(Condition::masked(ex.x0, mask), t[b], N);
  }
  const Matrix base = frozen.eps_mixed(schedule, steps, X, Condition::none());
  return {h_net.encode(X, t, C), E - base, Matrix::Ones(d, batch)};
}

TrainResult train_unconditional(EpsNet& net, const DataSampler& data,
                                const NoiseSchedule& schedule, const TrainConfig& cfg) {
  return run_training(net, cfg, [&](Rng& rng, Rng&) {
    return make_unconditional_batch(net, data, schedule, cfg.batch_size, rng);
  });
}

TrainResult train_amortised(EpsNet& net, const DataSampler& data, const MaskSampler& masks,
                            const NoiseSchedule& schedule, const TrainConfig& cfg) {
  if (net.layout().mode != NetMode::Amortised) {
    throw ConfigError("amortised training needs a network in amortised mode");
  }
  return run_training(net, cfg, [&](Rng& rng, Rng& side) {
    return make_amortised_batch(net, data, masks, schedule, cfg.batch_size, cfg.p_drop, rng,
                                side);
  });
}

TrainResult train_classifier_free(EpsNet& net, const JointSampler& data,
                                  const NoiseSchedule& schedule, const TrainConfig& cfg) {
  if (net.layout().mode != NetMode::ClassifierFree) {
    throw ConfigError("classifier-free training needs a network in classifier_free mode");
  }
  return run_training(net, cfg, [&](Rng& rng, Rng& side) {
    return make_classifier_free_batch(net, data, schedule, cfg.batch_size, cfg.p_drop, rng, side);
  });
}

TrainResult train_rfdiff_style(EpsNet& net, const DataSampler& data, const MaskSampler& masks,
                               const NoiseSchedule& schedule, const TrainConfig& cfg) {
  if (net.layout().mode != NetMode::RfDiff) {
    throw ConfigError("rfdiff-style training needs a network with per-coordinate time input");
  }
  return run_training(net, cfg, [&](Rng& rng, Rng& side) {
    return make_rfdiff_batch(net, data, masks, schedule, cfg.batch_size, cfg.p_drop, rng, side);
  });
}

TrainResult finetune_offline(const EpsModel& frozen, EpsNet& h_net, const DataSampler& data,
                             const MaskSampler& masks, const NoiseSchedule& schedule,
                             const TrainConfig& cfg) {
  if (h_net.layout().mode != NetMode::Amortised) {
    throw ConfigError("offline finetuning needs an h-network in amortised mode");
  }
  if (frozen.caps().accepts != ConditionKind::None || frozen.dim() != h_net.dim()) {
    throw ConfigError("offline finetuning needs an unconditional frozen model of matching size");
  }
  return run_training(h_net, cfg, [&](Rng& rng, Rng& side) {
    return make_finetune_batch(frozen, h_net, data, masks, schedule, cfg.batch_size, cfg.p_drop,
                               rng, side);
  });
}

MaskSampler random_subset_masks(Index dim) {
  return [dim](Rng& rng) {
    if (dim == 1) return Vector::Ones(1).eval();
    for (;;) {
      Vector m(dim);
      for (Index i = 0; i < dim; ++i) m[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      const double s = m.sum();
      if (s > 0.0 && s < static_cast<double>(dim)) return m;
    }
  };
}

MaskSampler fixed_mask(Vector mask) {
  return [mask = std::move(mask)](Rng&) { return mask; };
}

}  // namespace doob
