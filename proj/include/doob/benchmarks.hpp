#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "doob/engine.hpp"
#include "doob/eval.hpp"

namespace doob {

/// A registered conditioning problem with an exact answer.
struct Benchmark {
  std::string name;
  std::string description;
  GaussianMixture prior;
  std::optional<Observation> observation;  ///< set for observation benchmarks
  std::optional<IntervalEvent> interval;   ///< set for interval-event benchmarks
  std::vector<Index> unobserved;           ///< coordinates scored by the headline W1

  HTransform h_transform() const;
  /// n x d exact posterior draws.
  Matrix reference_samples(Index n, Rng& rng) const;
};

const std::vector<std::string>& benchmark_names();

/// Throws ConfigError listing the registry for an unknown name.
Benchmark make_benchmark(const std::string& name);

/// One strategy under comparison together with the model it samples from.
struct BenchEntry {
  std::string label;
  std::shared_ptr<const EpsModel> model;
  std::shared_ptr<const ConditioningStrategy> strategy;
};

struct BenchRow {
  std::string label;
  std::uint64_t seed;
  MetricReport report;
};

struct BenchSettings {
  Index n_chains = 4000;
  Index n_reference = 4000;
  SigmaRule sigma_rule = SigmaRule::SqrtBeta;
  int threads = 0;
};

/// Samples every entry under every seed and scores it against fresh exact draws. Reference
/// draws and projection directions depend only on the seed, so all entries sharing a seed
/// are compared against the same reference set.
std::vector<BenchRow> run_benchmark(const Benchmark& bench, const NoiseSchedule& schedule,
                                    const std::vector<BenchEntry>& entries,
                                    const std::vector<std::uint64_t>& seeds,
                                    const BenchSettings& settings,
                                    std::vector<Matrix>* samples = nullptr);

struct BenchSummary {
  std::string label;
  double mean = 0.0;
  double std_error = 0.0;  ///< 0 for a single seed
  Index n = 0;
};

/// Mean and standard error of w1_unobserved per label, in first-appearance order.
std::vector<BenchSummary> summarise(const std::vector<BenchRow>& rows);

}  // namespace doob
