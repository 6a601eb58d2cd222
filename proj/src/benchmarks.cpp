#include "doob/benchmarks.hpp"

#include <cmath>
#include <algorithm>

namespace doob {

namespace {

constexpr std::uint64_t kReferenceStream = 0x5EF0'0000'0000'0001ULL;
constexpr std::uint64_t kMetricStream = 0x5EF0'0000'0000'0002ULL;

Benchmark truncated_1d() {
  return {"truncated-1d",
          "N(0, 1) prior conditioned on the event X0 in (0, 1)",
          GaussianMixture::single(Vector::Zero(1), Matrix::Identity(1, 1)),
          std::nullopt,
          IntervalEvent{0.0, 1.0},
          {0}};
}

Benchmark correlated_2d() {
  Matrix cov(2, 2);
  cov << 1.0, 0.9, 0.9, 1.0;
  return {"correlated-gaussian-2d",
          "bivariate Gaussian with correlation 0.9, x0 observed exactly at 1.0",
          GaussianMixture::single(Vector::Zero(2), cov),
          Observation::mask({true, false}, Vector::Constant(1, 1.0), 0.0),
          std::nullopt,
          {1}};
}

Benchmark mixture_1d() {
  Vector w(2);
  w << 0.5, 0.5;
  return {"mixture-posterior-1d",
          "two-component 1-D mixture (means -2 and 2, sd 0.5), y = x + N(0, 1) noise with y = 1",
          GaussianMixture::diagonal(w, {Vector::Constant(1, -2.0), Vector::Constant(1, 2.0)},
                                    {Vector::Constant(1, 0.25), Vector::Constant(1, 0.25)}),
          Observation::mask({true}, Vector::Constant(1, 1.0), 1.0),
          std::nullopt,
          {0}};
}

Benchmark masked_8d() {
  Matrix cov(8, 8);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) cov(i, j) = std::pow(0.8, std::abs(static_cast<double>(i - j)));
  Vector y(3);
  y << 1.0, -0.5, 0.8;
  return {"masked-gaussian-8d",
          "8-D Gaussian with covariance 0.8^|i-j|, coordinates 0, 3 and 6 observed exactly",
          GaussianMixture::single(Vector::Zero(8), cov),
          Observation::mask({true, false, false, true, false, false, true, false}, y, 0.0),
          std::nullopt,
          {1, 2, 4, 5, 7}};
}

}  // namespace

HTransform Benchmark::h_transform() const {
  if (interval) return HTransform::interval(prior, interval->a, interval->b);
  return HTransform::linear_gaussian(prior, *observation);
}

Matrix Benchmark::reference_samples(Index n, Rng& rng) const {
  if (interval) return sample_truncated(prior, interval->a, interval->b, n, rng).transpose();
  return true_posterior(prior, *observation).sample(n, rng).transpose();
}

const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names{"truncated-1d", "correlated-gaussian-2d",
                                              "mixture-posterior-1d", "masked-gaussian-8d"};
  return names;
}

Benchmark make_benchmark(const std::string& name) {
  if (name == "truncated-1d") return truncated_1d();
  if (name == "correlated-gaussian-2d") return correlated_2d();
  if (name == "mixture-posterior-1d") return mixture_1d();
  if (name == "masked-gaussian-8d") return masked_8d();
  std::string list;
  for (const auto& n : benchmark_names()) list += (list.empty() ? "" : ", ") + n;
  throw ConfigError("unknown benchmark '" + name + "'; registered: " + list);
}

std::vector<BenchRow> run_benchmark(const Benchmark& bench, const NoiseSchedule& schedule,
                                    const std::vector<BenchEntry>& entries,
                                    const std::vector<std::uint64_t>& seeds,
                                    const BenchSettings& settings, std::vector<Matrix>* samples) {
  std::vector<BenchRow> rows;
  for (std::uint64_t seed : seeds) {
    Rng ref_rng(substream_seed(seed, kReferenceStream), 0);
    const Matrix reference = bench.reference_samples(settings.n_reference, ref_rng);
    for (const auto& entry : entries) {
      SamplerConfig cfg;
      cfg.n_chains = settings.n_chains;
      cfg.seed = seed;
      cfg.sigma_rule = settings.sigma_rule;
      cfg.threads = settings.threads;
      const SampleBatch batch = sample(*entry.model, schedule, *entry.strategy, cfg);
      Rng metric_rng(substream_seed(seed, kMetricStream), 0);
      const Matrix kept = finite_rows(batch.final);
      if (kept.rows() == 0) {
        throw NumericalError("every chain of '" + entry.label + "' aborted (seed " +
                             std::to_string(seed) + ")");
      }
      MetricReport report =
          compare_samples(kept, reference, bench.unobserved, bench.observation, metric_rng);
      report.seeds = {seed};
      rows.push_back({entry.label, seed, std::move(report)});
      if (samples) samples->push_back(batch.final);
    }
  }
  return rows;
}

std::vector<BenchSummary> summarise(const std::vector<BenchRow>& rows) {
  std::vector<BenchSummary> out;
  for (const auto& row : rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const BenchSummary& s) { return s.label == row.label; });
    if (it == out.end()) {
      out.push_back({row.label, 0.0, 0.0, 0});
      it = out.end() - 1;
    }
    it->mean += row.report.w1_unobserved;
    ++it->n;
  }
  for (auto& s : out) {
    s.mean /= static_cast<double>(s.n);
    double ss = 0.0;
    for (const auto& row : rows) {
      if (row.label == s.label) ss += std::pow(row.report.w1_unobserved - s.mean, 2);
    }
    s.std_error = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1) / static_cast<double>(s.n))
                          : 0.0;
  }
  return out;
}

}  // namespace doob
