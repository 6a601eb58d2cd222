#include <cmath>
#include <numbers>

#include "doob/nets.hpp"
#include "doob/optim.hpp"

namespace doob {

ChainNoise ChainNoise::draw(Index dim, Index chains, int n_steps, Rng& rng) {
  ChainNoise noise;
  noise.x_init.resize(dim, chains);
  for (Index b = 0; b < chains; ++b) noise.x_init.col(b) = rng.normal_vector(dim);
  noise.z.assign(static_cast<std::size_t>(n_steps) + 1, Matrix());
  for (int k = n_steps; k >= 2; --k) {
    Matrix& z = noise.z[static_cast<std::size_t>(k)];
    z.resize(dim, chains);
    for (Index b = 0; b < chains; ++b) z.col(b) = rng.normal_vector(dim);
  }
  return noise;
}

double control_weight(const NoiseSchedule& schedule, int k, ControlWeight weight) {
  const double beta = schedule.beta(k);
  if (weight == ControlWeight::Simplified) return 0.5 * beta;
  const double lambda = 1.0 - std::sqrt(1.0 - beta);
  return 2.0 * lambda * lambda / beta;
}

Vector observation_log_likelihood(const Observation& obs, const Matrix& X0) {
  if (obs.is_hard()) {
    throw ConfigError("the observation log-likelihood needs a soft observation (noise_std > 0)");
  }
  const double s2 = obs.noise_std() * obs.noise_std();
  const Matrix r = obs.apply(X0).colwise() - obs.y();
  const double norm = -0.5 * static_cast<double>(obs.n_obs()) * std::log(2.0 * std::numbers::pi * s2);
  return (norm - 0.5 * r.colwise().squaredNorm().array() / s2).matrix().transpose();
}

namespace {

Matrix observation_log_likelihood_grad(const Observation& obs, const Matrix& X0) {
  const double s2 = obs.noise_std() * obs.noise_std();
  const Matrix r = obs.apply(X0).colwise() - obs.y();
  return -obs.op().transpose() * r / s2;
}

void check_chain(const EpsModel& frozen, const Observation& obs, const NoiseSchedule& schedule,
                 const ChainNoise& noise) {
  if (frozen.caps().accepts != ConditionKind::None) {
    throw ConfigError("control finetuning needs an unconditional frozen model");
  }
  if (obs.dim() != frozen.dim() || noise.x_init.rows() != frozen.dim()) {
    throw ConfigError("dimension mismatch between model, observation and chain noise");
  }
  if (noise.z.size() != static_cast<std::size_t>(schedule.n_steps()) + 1) {
    throw ConfigError("chain noise was drawn for a different number of steps");
  }
}

Matrix control_input(const EpsNet& f_net, const NoiseSchedule& schedule, int k, const Matrix& X) {
  const double t = static_cast<double>(k) / schedule.n_steps();
  return f_net.encode(X, Vector::Constant(X.cols(), t), Matrix(0, X.cols()));
}

}  // namespace

double control_objective(const EpsModel& frozen, const ControlFn& control, const Observation& obs,
                         const NoiseSchedule& schedule, ControlWeight weight,
                         const ChainNoise& noise) {
  check_chain(frozen, obs, schedule, noise);
  const Index B = noise.x_init.cols();
  Matrix x = noise.x_init;
  double energy = 0.0;
  for (int k = schedule.n_steps(); k >= 1; --k) {
    const double beta = schedule.beta(k);
    const double s = schedule.sqrt_one_minus_alpha_bar(k);
    const Matrix f = control(k, x);
    energy += control_weight(schedule, k, weight) * f.squaredNorm();
    const Matrix e = frozen.eps(schedule, k, x, Condition::none()) - s * f;
    x = (x - (beta / s) * e) / std::sqrt(1.0 - beta);
    if (k > 1) x += std::sqrt(beta) * noise.z[static_cast<std::size_t>(k)];
  }
  return (energy - observation_log_likelihood(obs, x).sum()) / B;
}

double control_objective_and_grad(const EpsModel& frozen, const EpsNet& f_net,
                                  const Observation& obs, const NoiseSchedule& schedule,
                                  ControlWeight weight, const ChainNoise& noise, Vector* grad) {
  if (f_net.layout().mode != NetMode::Unconditional || f_net.dim() != frozen.dim()) {
    throw ConfigError("the control network must be unconditional with the model's dimension");
  }
  if (!grad) {
    return control_objective(
        frozen,
        [&](int k, const Matrix& X) { return f_net.predict(control_input(f_net, schedule, k, X)); },
        obs, schedule, weight, noise);
  }
  check_chain(frozen, obs, schedule, noise);
  const int N = schedule.n_steps();
  const Index B = noise.x_init.cols();
  const auto Bd = static_cast<double>(B);

  // Forward pass keeping x_k and the control output per step.
  std::vector<Matrix> xs(static_cast<std::size_t>(N) + 1);
  std::vector<Matrix> fs(static_cast<std::size_t>(N) + 1);
  xs[static_cast<std::size_t>(N)] = noise.x_init;
  double energy = 0.0;
  for (int k = N; k >= 1; --k) {
    const auto ku = static_cast<std::size_t>(k);
    const double beta = schedule.beta(k);
    const double s = schedule.sqrt_one_minus_alpha_bar(k);
    fs[ku] = f_net.predict(control_input(f_net, schedule, k, xs[ku]));
    energy += control_weight(schedule, k, weight) * fs[ku].squaredNorm();
    const Matrix e = frozen.eps(schedule, k, xs[ku], Condition::none()) - s * fs[ku];
    Matrix next = (xs[ku] - (beta / s) * e) / std::sqrt(1.0 - beta);
    if (k > 1) next += std::sqrt(beta) * noise.z[ku];
    xs[ku - 1] = std::move(next);
  }
  const double objective = (energy - observation_log_likelihood(obs, xs[0]).sum()) / Bd;

  // Reverse sweep: g holds d objective / d x_{k-1}.
  Matrix g = -observation_log_likelihood_grad(obs, xs[0]) / Bd;
  for (int k = 1; k <= N; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const double beta = schedule.beta(k);
    const double s = schedule.sqrt_one_minus_alpha_bar(k);
    const double a = 1.0 / std::sqrt(1.0 - beta);
    const double c = beta / s;
    const double w = control_weight(schedule, k, weight);
    const Matrix upstream_f = (a * c * s) * g + (2.0 * w / Bd) * fs[ku];
    Mlp<double>::Tape tape;
    f_net.mlp().forward(control_input(f_net, schedule, k, xs[ku]), tape);
    const Matrix df = f_net.mlp().backward(tape, upstream_f, grad).topRows(f_net.dim());
    const Matrix de = frozen.eps_vjp(schedule, k, xs[ku], Condition::none(), (a * c) * g);
    g = a * g - de + df;
  }
  return objective;
}

TrainResult finetune_control(const EpsModel& frozen, EpsNet& f_net, const Observation& obs,
                             const NoiseSchedule& schedule, const ControlConfig& cfg) {
  if (schedule.n_steps() > cfg.max_backprop_steps) {
    throw ConfigError("control finetuning back-propagates through every step; N = " +
                      std::to_string(schedule.n_steps()) + " exceeds max_backprop_steps = " +
                      std::to_string(cfg.max_backprop_steps));
  }
  if (cfg.chains < 1 || cfg.steps < 0) throw ConfigError("invalid control finetuning sizes");
  Rng rng(cfg.seed, 0);
  Optimizer opt(cfg.optimizer, f_net.mlp().n_params());
  TrainResult result;
  Vector grad(f_net.mlp().n_params());
  for (int step = 0; step < cfg.steps; ++step) {
    const ChainNoise noise = ChainNoise::draw(f_net.dim(), cfg.chains, schedule.n_steps(), rng);
    grad.setZero();
    const double loss =
        control_objective_and_grad(frozen, f_net, obs, schedule, cfg.weight, noise, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw TrainingDivergence("control finetuning diverged at step " + std::to_string(step));
    }
    opt.step(f_net.mlp().params(), grad,
             decayed_lr(cfg.learning_rate, cfg.lr_final_fraction, step, cfg.steps));
    result.loss.push_back(loss);
  }
  return result;
}

}  // namespace doob
