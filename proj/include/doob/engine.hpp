#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "doob/model.hpp"
#include "doob/rng.hpp"
#include "doob/schedule.hpp"
#include "doob/strategy.hpp"

namespace doob {

enum class SigmaRule {
  SqrtBeta,  ///< sigma_k = sqrt(beta_k), variance-matched ancestral sampling
  Beta,      ///< sigma_k = beta_k
};

std::string to_string(SigmaRule rule);
SigmaRule sigma_rule_from_string(const std::string& name);
double reverse_sigma(const NoiseSchedule& schedule, int k, SigmaRule rule);

struct SamplerConfig {
  Index n_chains = 1000;
  bool store_trajectory = false;
  std::uint64_t seed = 0;
  SigmaRule sigma_rule = SigmaRule::SqrtBeta;
  /// Worker threads; 0 reads DOOB_LAB_THREADS (default 1).
  int threads = 0;
};

struct SampleBatch {
  Matrix final;  ///< n_chains x d
  /// trajectory[t] is n_chains x d at step index t; trajectory[0] == final. Empty unless stored.
  std::vector<Matrix> trajectory;
  std::vector<std::uint64_t> seeds;  ///< per-chain RNG substream id
  std::vector<bool> aborted;
  std::vector<std::string> diagnostics;

  Index n_chains() const { return final.rows(); }
  Index dim() const { return final.cols(); }
  Index n_aborted() const;
};

/// x_k = sqrt(ab_k) x0 + sqrt(1 - ab_k) eps, column-wise.
Matrix forward_noise(const NoiseSchedule& schedule, int k, const Matrix& X0, const Matrix& eps);

/// Draws eps and returns (x_k, eps).
std::pair<Vector, Vector> forward_noise(const NoiseSchedule& schedule, int k, const Vector& x0,
                                        Rng& rng);

/// (1 - beta_k)^-1/2 (x_k - beta_k (1 - ab_k)^-1/2 eps_hat)
Matrix reverse_drift(const NoiseSchedule& schedule, int k, const Matrix& X, const Matrix& eps_hat);

/// One ancestral step. Noise is drawn only when k > 1.
Vector reverse_step(const NoiseSchedule& schedule, int k, const Vector& x_k,
                    const Vector& eps_hat, Rng& rng, const SamplerConfig& cfg);

/// Ancestral sampling from x_N ~ N(0, I) down to x_0 with the strategy's hooks.
///
/// Chains are processed in fixed blocks, each chain owning the RNG substream (seed, chain id),
/// so the result is independent of the thread count. A chain whose state turns non-finite is
/// flagged in `aborted` and reported in `diagnostics`.
SampleBatch sample(const EpsModel& model, const NoiseSchedule& schedule,
                   const ConditioningStrategy& strategy, const SamplerConfig& cfg);

/// Thread count from DOOB_LAB_THREADS, clamped to >= 1.
int threads_from_env();

/// Chains per scheduling block.
inline constexpr Index kChainBlock = 256;

}  // namespace doob
