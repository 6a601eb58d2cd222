#include "doob/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace doob {

void ConditioningStrategy::validate(const EpsModel& model) const {
  if (model.caps().per_coordinate_time) {
    throw ConfigError("strategy '" + name() +
                      "' cannot drive a network trained with per-coordinate time");
  }
}

std::string to_string(SigmaRule rule) { return rule == SigmaRule::Beta ? "beta" : "sqrt_beta"; }

SigmaRule sigma_rule_from_string(const std::string& name) {
  if (name == "sqrt_beta") return SigmaRule::SqrtBeta;
  if (name == "beta") return SigmaRule::Beta;
  throw ConfigError("unknown sigma rule '" + name + "' (expected sqrt_beta or beta)");
}

double reverse_sigma(const NoiseSchedule& schedule, int k, SigmaRule rule) {
  const double b = schedule.beta(k);
  return rule == SigmaRule::Beta ? b : std::sqrt(b);
}

Index SampleBatch::n_aborted() const {
  return static_cast<Index>(std::count(aborted.begin(), aborted.end(), true));
}

Matrix forward_noise(const NoiseSchedule& schedule, int k, const Matrix& X0, const Matrix& eps) {
  return schedule.sqrt_alpha_bar(k) * X0 + schedule.sqrt_one_minus_alpha_bar(k) * eps;
}

std::pair<Vector, Vector> forward_noise(const NoiseSchedule& schedule, int k, const Vector& x0,
                                        Rng& rng) {
  if (k < 1 || k > schedule.n_steps()) throw DomainError("forward_noise: step out of range");
  Vector eps = rng.normal_vector(x0.size());
  Vector xk = schedule.sqrt_alpha_bar(k) * x0 + schedule.sqrt_one_minus_alpha_bar(k) * eps;
  return {std::move(xk), std::move(eps)};
}

Matrix reverse_drift(const NoiseSchedule& schedule, int k, const Matrix& X,
                     const Matrix& eps_hat) {
  const double b = schedule.beta(k);
  return (X - (b / schedule.sqrt_one_minus_alpha_bar(k)) * eps_hat) / std::sqrt(1.0 - b);
}

Vector reverse_step(const NoiseSchedule& schedule, int k, const Vector& x_k,
                    const Vector& eps_hat, Rng& rng, const SamplerConfig& cfg) {
  Vector x = reverse_drift(schedule, k, x_k, eps_hat);
  if (k > 1) x += reverse_sigma(schedule, k, cfg.sigma_rule) * rng.normal_vector(x.size());
  return x;
}

int threads_from_env() {
  if (const char* env = std::getenv("DOOB_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

namespace {

struct Block {
  Index first;
  Index count;
};

void run_block(const EpsModel& model, const NoiseSchedule& schedule,
               const ConditioningStrategy& strategy, const SamplerConfig& cfg, Block block,
               SampleBatch& out, std::vector<std::string>& per_chain) {
  const Index d = model.dim();
  const int N = schedule.n_steps();
  std::vector<Rng> rngs;
  rngs.reserve(static_cast<std::size_t>(block.count));
  for (Index j = 0; j < block.count; ++j) {
    rngs.emplace_back(cfg.seed, static_cast<std::uint64_t>(block.first + j));
  }
  Matrix X(d, block.count);
  for (Index j = 0; j < block.count; ++j) X.col(j) = rngs[j].normal_vector(d);

  auto store = [&](int t, const Matrix& S) {
    if (!cfg.store_trajectory) return;
    out.trajectory[static_cast<std::size_t>(t)].middleRows(block.first, block.count) =
        S.transpose();
  };
  store(N, X);

  const Condition base_cond = strategy.model_condition();
  std::vector<bool> dead(static_cast<std::size_t>(block.count), false);

  for (int k = N; k >= 1; --k) {
    StepContext ctx{schedule, model, k, std::span<Rng>(rngs)};
    const double sigma = reverse_sigma(schedule, k, cfg.sigma_rule);
    auto inner = [&](const Matrix& X_in) -> Matrix {
      Matrix Xk = X_in;
      Condition cond = base_cond;
      strategy.pre_score(ctx, Xk, cond);
      Matrix E = model.eps(schedule, k, Xk, cond);
      strategy.post_score(ctx, Xk, E, cond);
      Matrix Xp = reverse_drift(schedule, k, Xk, E);
      strategy.post_drift(ctx, Xp);
      if (k > 1) {
        for (Index j = 0; j < Xp.cols(); ++j) Xp.col(j) += sigma * rngs[j].normal_vector(d);
      }
      strategy.post_noise(ctx, Xp);
      return Xp;
    };
    X = strategy.outer_step(ctx, X, inner);

    for (Index j = 0; j < block.count; ++j) {
      if (dead[static_cast<std::size_t>(j)] || X.col(j).allFinite()) continue;
      dead[static_cast<std::size_t>(j)] = true;
      out.aborted[static_cast<std::size_t>(block.first + j)] = true;
      per_chain[static_cast<std::size_t>(block.first + j)] = ("chain " + std::to_string(block.first + j) +
                                ": non-finite state at step " + std::to_string(k) +
                                " under strategy '" + strategy.name() + "'");
    }
    store(k - 1, X);
  }
  out.final.middleRows(block.first, block.count) = X.transpose();
}

}  // namespace

SampleBatch sample(const EpsModel& model, const NoiseSchedule& schedule,
                   const ConditioningStrategy& strategy, const SamplerConfig& cfg) {
  if (cfg.n_chains < 1) throw ConfigError("sampler: n_chains must be >= 1");
  strategy.validate(model);

  const Index d = model.dim();
  const int N = schedule.n_steps();
  SampleBatch out;
  out.final.resize(cfg.n_chains, d);
  out.aborted.assign(static_cast<std::size_t>(cfg.n_chains), false);
  out.seeds.resize(static_cast<std::size_t>(cfg.n_chains));
  for (Index c = 0; c < cfg.n_chains; ++c) out.seeds[static_cast<std::size_t>(c)] = c;
  if (cfg.store_trajectory) {
    out.trajectory.assign(static_cast<std::size_t>(N + 1), Matrix(cfg.n_chains, d));
  }

  std::vector<Block> blocks;
  for (Index first = 0; first < cfg.n_chains; first += kChainBlock) {
    blocks.push_back({first, std::min(kChainBlock, cfg.n_chains - first)});
  }

  const int threads = std::max(1, std::min<int>(cfg.threads > 0 ? cfg.threads : threads_from_env(),
                                                static_cast<int>(blocks.size())));
  std::vector<std::string> per_chain(static_cast<std::size_t>(cfg.n_chains));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= blocks.size()) return;
      try {
        run_block(model, schedule, strategy, cfg, blocks[i], out, per_chain);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = blocks.size();
        return;
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  for (auto& msg : per_chain)
    if (!msg.empty()) out.diagnostics.push_back(std::move(msg));
  return out;
}

}  // namespace doob
