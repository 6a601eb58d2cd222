// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance            run every criterion
//   acceptance A3 A4      run a subset (A4 trains the A3 network when run alone)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doob/benchmarks.hpp"
#include "doob/cli.hpp"
#include "doob/conditioning.hpp"
#include "doob/engine.hpp"
#include "doob/eval.hpp"
#include "doob/nets.hpp"
#include "gradcheck.hpp"

using namespace doob;

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [x]");
  }
};

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Matrix posterior_draws(const GaussianMixture& prior, const Observation& obs, Index n, std::uint64_t seed) {
  Rng rng(seed);
  return true_posterior(prior, obs).sample(n, rng).transpose();
}

double sliced(const Matrix& a, const Matrix& b, std::uint64_t seed) {
  Rng rng(seed);
  return sliced_w1(a, b, 200, rng);
}

/// 2-D Gaussian prior with a soft scalar observation, shared by A2 and A7.
struct SoftTask {
  GaussianMixture prior;
  Observation obs;
};

SoftTask soft_task() {
  Vector m(2);
  m << 0.5, -0.5;
  Matrix S(2, 2);
  S << 1.0, 0.3, 0.3, 0.8;
  Matrix A(1, 2);
  A << 1.0, 0.5;
  return {GaussianMixture::single(m, S), Observation::matrix(A, Vector::Constant(1, 1.5), 0.3)};
}

// A1

Outcome truncated_normal() {
  Outcome o;
  const auto start = Clock::now();
  const auto prior = GaussianMixture::single(Vector::Zero(1), Matrix::Identity(1, 1));
  const auto schedule = make_linear_schedule(1000, 1e-4, 2e-2);
  const AnalyticEpsModel model(prior);
  SamplerConfig sc;
  sc.n_chains = 10000;
  sc.seed = 1;
  sc.threads = 1;
  const auto batch = sample(model, schedule, ExactHStrategy(HTransform::interval(prior, 0.0, 1.0)), sc);
  const double elapsed = seconds_since(start);

  const Vector x = batch.final.col(0);
  const double n = static_cast<double>(x.size());
  const auto tm = truncated_moments(prior, 0.0, 1.0);
  const double mean = x.mean();
  const Vector c = x.array() - mean;
  const double var = c.squaredNorm() / (n - 1);
  // Standard error of the sample variance from the fourth central moment of the target.
  const double m4 = [&] {
    const QuadraturePosterior q = quadrature_posterior_1d(prior, IntervalEvent{0.0, 1.0}, -1, 2, 20001);
    const double h = q.grid[1] - q.grid[0];
    double s = 0.0;
    for (Index i = 0; i < q.grid.size(); ++i) {
      const double w = (i == 0 || i + 1 == q.grid.size()) ? 0.5 : 1.0;
      s += w * h * std::pow(q.grid[i] - tm.mean, 4) * q.density[i];
    }
    return s;
  }();
  const double se_mean = std::sqrt(tm.variance / n);
  const double se_var = std::sqrt((m4 - tm.variance * tm.variance) / n);
  const double inside =
      static_cast<double>((x.array() >= -0.001 && x.array() <= 1.001).count()) / n;

  o.check(std::abs(mean - tm.mean) < 3 * se_mean,
          fmt("mean %.5f vs %.5f (3 SE %.5f)", mean, tm.mean, 3 * se_mean));
  o.check(std::abs(var - tm.variance) < 3 * se_var,
          fmt("var %.5f vs %.5f (3 SE %.5f)", var, tm.variance, 3 * se_var));
  o.check(inside >= 0.99, fmt("inside %.4f", inside));
  o.check(elapsed < 60.0, fmt("%.1f s", elapsed));
  return o;
}

// A2

Outcome soft_posterior() {
  Outcome o;
  const SoftTask t = soft_task();
  const auto schedule = make_linear_schedule(1000, 1e-4, 2e-2);
  const AnalyticEpsModel model(t.prior);
  const Matrix ref = posterior_draws(t.prior, t.obs, 10000, 21);
  SamplerConfig sc;
  sc.n_chains = 10000;
  sc.seed = 2;
  const auto exact = sample(model, schedule, ExactHStrategy(HTransform::linear_gaussian(t.prior, t.obs)), sc);
  const auto guided = sample(model, schedule, ReconGuidanceStrategy(t.obs, {GuidanceKind::MomentMatched, 0.0}), sc);
  const double w_exact = sliced(exact.final, ref, 22);
  const double w_guided = sliced(guided.final, ref, 22);
  o.check(w_exact < 0.05, fmt("exact_h sliced W1 %.4f < 0.05", w_exact));
  o.check(w_guided < 0.08, fmt("recon_guidance sliced W1 %.4f < 0.08", w_guided));
  return o;
}

// A3 and A4 share the amortised network.

struct Amortised {
  Benchmark bench = make_benchmark("correlated-gaussian-2d");
  NoiseSchedule schedule = make_scaled_linear_schedule(250);
  std::shared_ptr<const EpsNet> net;
  double train_seconds = 0.0;
  int steps = 0;
};

const Amortised& amortised_net() {
  static const Amortised a = [] {
    Amortised r;
    NetLayout layout;
    layout.dim = 2;
    layout.mode = NetMode::Amortised;
    layout.hidden = {128, 128};
    auto net = std::make_shared<EpsNet>(layout, 3);
    TrainConfig tc;
    tc.steps = 20000;
    tc.batch_size = 256;
    tc.learning_rate = 1e-3;
    tc.lr_final_fraction = 0.05;
    tc.seed = 3;
    const GaussianMixture prior = r.bench.prior;
    const auto start = Clock::now();
    train_amortised(*net, [prior](Rng& rng) { return prior.sample_one(rng); }, random_subset_masks(2),
                    r.schedule, tc);
    r.train_seconds = seconds_since(start);
    r.steps = tc.steps;
    r.net = net;
    return r;
  }();
  return a;
}

Outcome amortised_training() {
  Outcome o;
  const auto start = Clock::now();
  const Amortised& a = amortised_net();
  const NetEpsModel model(a.net);
  SamplerConfig sc;
  sc.n_chains = 10000;
  sc.seed = 4;
  sc.threads = 1;
  const auto batch = sample(model, a.schedule, AmortisedStrategy(*a.bench.observation), sc);
  const double elapsed = seconds_since(start);

  const auto post = true_posterior(a.bench.prior, *a.bench.observation);
  const Vector x1 = batch.final.col(1);
  const double mean = x1.mean();
  const double var = (x1.array() - mean).square().sum() / static_cast<double>(x1.size() - 1);
  const double mean_true = post.mean()[1], var_true = post.covariance()(1, 1);
  const Matrix ref = posterior_draws(a.bench.prior, *a.bench.observation, 10000, 41);
  const double w = sliced(batch.final, ref, 42);
  o.check(std::abs(mean - mean_true) < 0.1, fmt("mean err %.4f < 0.1", std::abs(mean - mean_true)));
  o.check(std::abs(var - var_true) < 0.05, fmt("var err %.4f < 0.05", std::abs(var - var_true)));
  o.check(w < 0.1, fmt("sliced W1 %.4f < 0.1", w));
  o.check(a.steps <= 50000, fmt("%d steps", a.steps));
  o.check(elapsed < 900.0, fmt("%.0f s (training %.0f s)", elapsed, a.train_seconds));
  return o;
}

Outcome strategy_ordering() {
  Outcome o;
  const Amortised& a = amortised_net();
  const auto oracle = std::make_shared<AnalyticEpsModel>(a.bench.prior);
  const Observation& obs = *a.bench.observation;
  const std::vector<BenchEntry> entries{
      {"amortised", std::make_shared<NetEpsModel>(a.net), std::make_shared<AmortisedStrategy>(obs)},
      {"exact_h", oracle, std::make_shared<ExactHStrategy>(a.bench.h_transform())},
      {"replacement", oracle, std::make_shared<ReplacementStrategy>(obs)}};
  const auto rows = run_benchmark(a.bench, a.schedule, entries, {1, 2, 3, 4, 5}, BenchSettings{});
  const auto s = summarise(rows);
  const BenchSummary& repl = s[2];
  for (std::size_t i = 0; i < 2; ++i) {
    const bool ordered = s[i].mean + s[i].std_error < repl.mean - repl.std_error;
    o.check(ordered, fmt("%s %.4f+-%.4f < replacement %.4f+-%.4f", s[i].label.c_str(), s[i].mean,
                         s[i].std_error, repl.mean, repl.std_error));
  }
  return o;
}

// A5

Outcome gradient_suite() {
  Outcome o;
  const auto results = gradcheck::full_suite(50, 2024);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : results) {
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_name = r.name;
    }
    if (!(r.max_rel_err < 1e-4) || r.directions < 50) o.check(false, r.name);
  }
  o.check(worst < 1e-4, fmt("%zu checks, worst %.2e (%s)", results.size(), worst, worst_name.c_str()));
  return o;
}

// A6

Outcome bayes_decomposition() {
  Outcome o;
  Vector m(2);
  m << 0.3, -0.2;
  Matrix S(2, 2);
  S << 1.0, 0.7, 0.7, 1.0;
  const auto prior = GaussianMixture::single(m, S);
  Matrix A(1, 2);
  A << 0.8, 1.1;
  const Observation obs = Observation::matrix(A, Vector::Constant(1, 1.3), 0.25);
  const auto h = HTransform::linear_gaussian(prior, obs);
  const GaussianMixture post = true_posterior(prior, obs).mixture();
  const auto schedule = make_linear_schedule(1000, 1e-4, 2e-2);
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = static_cast<int>(rng.uniform_int(1, 1000));
    const Vector x = 2.0 * rng.normal_vector(2);
    const Vector lhs = marginal_score(post, schedule, k, x);
    const Vector rhs = marginal_score(prior, schedule, k, x) + h_value_and_grad(h, schedule, k, x).grad_log_h;
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff() / std::max(1.0, lhs.cwiseAbs().maxCoeff()));
  }
  o.check(worst < 1e-8, fmt("100 points, max error %.2e", worst));
  return o;
}

// A7

Outcome finetune_control_criterion() {
  Outcome o;
  const SoftTask t = soft_task();
  const auto schedule = make_scaled_linear_schedule(50);
  const AnalyticEpsModel model(t.prior);
  const auto h = HTransform::linear_gaussian(t.prior, t.obs);
  const ControlFn optimal = [&](int k, const Matrix& X) { return h_value_and_grad(h, schedule, k, X).grad_log_h; };
  const ControlFn zero = [](int, const Matrix& X) { return Matrix::Zero(X.rows(), X.cols()).eval(); };
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const ChainNoise noise = ChainNoise::draw(2, 1000, schedule.n_steps(), rng);
    wins += control_objective(model, optimal, t.obs, schedule, ControlWeight::Simplified, noise) <
            control_objective(model, zero, t.obs, schedule, ControlWeight::Simplified, noise);
  }
  o.check(wins == 5, fmt("analytic < zero control on %d/5 seeds", wins));

  NetLayout layout;
  layout.dim = 2;
  layout.hidden = {64, 64};
  EpsNet f_net(layout, 7, 0.0);
  ControlConfig cc;
  cc.steps = 600;
  cc.chains = 256;
  cc.learning_rate = 3e-3;
  cc.lr_final_fraction = 0.05;
  cc.seed = 7;
  finetune_control(model, f_net, t.obs, schedule, cc);
  const auto control = std::make_shared<const NetEpsModel>(std::make_shared<const EpsNet>(f_net));
  SamplerConfig sc;
  sc.n_chains = 10000;
  sc.seed = 8;
  const auto batch = sample(model, schedule, FinetunedHStrategy(control, FinetuneMode::Control), sc);
  const double w = sliced(batch.final, posterior_draws(t.prior, t.obs, 10000, 71), 72);
  o.check(w < 0.1, fmt("trained control sliced W1 %.4f < 0.1 (N = 50)", w));
  return o;
}

// A8

Outcome ou_convergence() {
  Outcome o;
  const double m = 3.0, v = 0.25;
  const Index n = 200000;
  Rng rng(9);
  const Matrix x0 = (m + std::sqrt(v) * rng.normal_vector(n).array()).matrix().transpose();
  const Matrix eps = rng.normal_vector(n).transpose();
  double prev_exact = INFINITY, prev_mc = INFINITY;
  std::string trace;
  for (int N : {10, 50, 250, 1000}) {
    const auto s = make_linear_schedule(N, 1e-4, 2e-2);
    const double ab = s.alpha_bar(N);
    const double exact = ab * m * m + std::pow(ab * (v - 1), 2);
    const Vector xk = forward_noise(s, N, x0, eps).row(0).transpose();
    const double mean = xk.mean();
    const double var = (xk.array() - mean).square().sum() / static_cast<double>(n - 1);
    const double mc = mean * mean + (var - 1) * (var - 1);
    o.pass = o.pass && exact < prev_exact && mc < prev_mc;
    trace += fmt("%sN=%d %.2e/%.2e", trace.empty() ? "" : ", ", N, exact, mc);
    prev_exact = exact;
    prev_mc = mc;
  }
  o.check(o.pass, "exact/Monte Carlo deviation " + trace);
  return o;
}

// A9

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "doob_acceptance_a9";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream(dir / name) << body;
    return (dir / name).string();
  };
  const std::string train = write("train.cfg",
                                  "seed = 5\nbenchmark = correlated-gaussian-2d\ntrain.kind = amortised\n"
                                  "train.steps = 200\ntrain.batch = 64\nnet.hidden = 32 32\n"
                                  "schedule.n_steps = 50\n");
  const std::string control = write("control.cfg",
                                    "seed = 5\nprior.0.mean = 0.5 -0.5\nprior.0.cov = 1 0.3 0.3 0.8\n"
                                    "obs.operator = matrix\nobs.matrix = 1 0.5\nobs.y = 1.5\n"
                                    "obs.noise_std = 0.3\ntrain.kind = finetune_control\ntrain.steps = 20\n"
                                    "train.chains = 32\nnet.hidden = 16\nschedule.n_steps = 20\n");
  const std::string sample = write("sample.cfg",
                                   "seed = 5\nbenchmark = masked-gaussian-8d\nstrategy = repaint\nrepaint.R = 2\n"
                                   "schedule.n_steps = 60\nsampler.n_chains = 1000\n"
                                   "sampler.store_trajectory = true\n");
  const std::string eval = write("eval.cfg",
                                 "seed = 5\nbenchmark = mixture-posterior-1d\nstrategy = recon_guidance\n"
                                 "guidance.kind = moment_matched\nschedule.n_steps = 100\n"
                                 "sampler.n_chains = 1000\n");
  const std::string bench = write("bench.cfg",
                                  "seed = 5\nbenchmark = correlated-gaussian-2d\n"
                                  "bench.strategies = exact_h replacement amortised\nbench.seeds = 1 2\n"
                                  "train.steps = 100\ntrain.batch = 32\nnet.hidden = 16\n"
                                  "schedule.n_steps = 40\nsampler.n_chains = 600\n");
  const std::vector<std::pair<std::string, std::string>> runs{
      {"train", train}, {"train", control}, {"sample", sample}, {"eval", eval}, {"bench", bench}};

  std::vector<std::vector<std::pair<std::string, std::string>>> outputs;
  for (const char* threads : {"1", "1", "4"}) {
    setenv("DOOB_LAB_THREADS", threads, 1);
    outputs.emplace_back();
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const fs::path out = dir / ("run" + std::to_string(outputs.size())) / std::to_string(r);
      std::ostringstream sink;
      const int code = cli::run({runs[r].first, "--config", runs[r].second, "--out", out.string()}, sink, sink);
      if (code != 0) o.check(false, runs[r].first + " exited with " + std::to_string(code) + ": " + sink.str());
      for (const auto& entry : fs::directory_iterator(out)) {
        outputs.back().emplace_back(std::to_string(r) + "/" + entry.path().filename().string(),
                                    slurp(entry.path()));
      }
    }
    std::sort(outputs.back().begin(), outputs.back().end());
  }
  unsetenv("DOOB_LAB_THREADS");
  fs::remove_all(dir);

  std::size_t mismatches = 0;
  for (std::size_t i = 1; i < outputs.size(); ++i) {
    if (outputs[i].size() != outputs[0].size()) {
      ++mismatches;
      continue;
    }
    for (std::size_t f = 0; f < outputs[0].size(); ++f) {
      if (outputs[i][f] != outputs[0][f]) {
        ++mismatches;
        o.check(false, outputs[i][f].first + " differs");
      }
    }
  }
  o.check(mismatches == 0 && !outputs[0].empty(),
          fmt("train, finetune, sample, eval and bench: %zu files identical over 3 runs (threads 1, 1, 4)",
              outputs[0].size()));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1", truncated_normal},   {"A2", soft_posterior},      {"A3", amortised_training},
      {"A4", strategy_ordering},  {"A5", gradient_suite},      {"A6", bayes_decomposition},
      {"A7", finetune_control_criterion}, {"A8", ou_convergence}, {"A9", determinism}};
  const std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.contains(id)) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %s  %s  (%.1f s)\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(start));
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
