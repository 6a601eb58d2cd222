#include "doob/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <functional>
#include <sstream>

#include "doob/conditioning.hpp"
#include "doob/io.hpp"
#include "doob/svg.hpp"

namespace doob::cli {

namespace {

namespace fs = std::filesystem;

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

GaussianMixture prior_from_config(const Config& cfg) {
  const auto M = cfg.get_int("prior.components", 1);
  if (M < 1) throw ConfigError("prior.components must be >= 1");
  Vector weights(M);
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  Index d = -1;
  for (Index m = 0; m < M; ++m) {
    const std::string p = "prior." + std::to_string(m) + ".";
    weights[m] = cfg.get_double(p + "weight", 1.0 / static_cast<double>(M));
    const Vector mean = to_vector(cfg.get_list(p + "mean"));
    if (d < 0) d = mean.size();
    if (mean.size() != d || d == 0) throw ConfigError(p + "mean: inconsistent dimension");
    const std::vector<double> c = cfg.get_list(p + "cov");
    Matrix cov;
    if (static_cast<Index>(c.size()) == d) {
      cov = to_vector(c).asDiagonal();
    } else if (static_cast<Index>(c.size()) == d * d) {
      cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          c.data(), d, d);
    } else {
      throw ConfigError(p + "cov: expected " + std::to_string(d) + " variances or a " +
                        std::to_string(d) + "x" + std::to_string(d) + " matrix");
    }
    means.push_back(mean);
    covs.push_back(cov);
  }
  return GaussianMixture(weights, means, covs);
}

std::vector<bool> mask_from_list(const std::vector<double>& v, Index d) {
  if (static_cast<Index>(v.size()) != d) {
    throw ConfigError("obs.mask needs one 0/1 entry per coordinate (" + std::to_string(d) + ")");
  }
  std::vector<bool> mask;
  for (double x : v) {
    if (x != 0.0 && x != 1.0) throw ConfigError("obs.mask entries must be 0 or 1");
    mask.push_back(x == 1.0);
  }
  return mask;
}

void ensure_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path.string());
}

const Observation& require_observation(const Benchmark& problem, const std::string& strategy) {
  if (!problem.observation) {
    throw ConfigError("strategy '" + strategy + "' needs an observation (obs.operator mask/matrix)");
  }
  return *problem.observation;
}

std::string meta_comment(const Config& cfg) {
  return "doob-lab " + version_string() + "\n" + cfg.echo();
}

}  // namespace

NoiseSchedule schedule_from_config(const Config& cfg) {
  const std::string kind = cfg.get_string("schedule.kind", "linear");
  if (kind == "custom") return make_custom_schedule(to_vector(cfg.get_list("schedule.betas")));
  const auto n = cfg.get_int("schedule.n_steps", 1000);
  if (n < 1 || n > 1'000'000) throw ConfigError("schedule.n_steps must lie in [1, 1e6]");
  const int N = static_cast<int>(n);
  switch (schedule_kind_from_string(kind)) {
    case ScheduleKind::Cosine: return make_cosine_schedule(N);
    case ScheduleKind::Linear: {
      const NoiseSchedule scaled = make_scaled_linear_schedule(N);
      return make_linear_schedule(N, cfg.get_double("schedule.beta_1", scaled.beta_first()),
                                  cfg.get_double("schedule.beta_N", scaled.beta_last()));
    }
    case ScheduleKind::Custom: break;
  }
  throw ConfigError("unsupported schedule kind '" + kind + "'");
}

Benchmark problem_from_config(const Config& cfg) {
  if (cfg.has("benchmark")) return make_benchmark(cfg.get_string("benchmark"));
  Benchmark p{"custom", "prior and observation from the config file", prior_from_config(cfg),
              std::nullopt, std::nullopt, {}};
  const Index d = p.prior.dim();
  const std::string op = cfg.get_string("obs.operator", "none");
  if (op == "mask") {
    const auto mask = mask_from_list(cfg.get_list("obs.mask"), d);
    p.observation = Observation::mask(mask, to_vector(cfg.get_list("obs.y")),
                                      cfg.get_double("obs.noise_std", 0.0));
    for (Index i = 0; i < d; ++i)
      if (!mask[static_cast<std::size_t>(i)] || !p.observation->is_hard()) p.unobserved.push_back(i);
  } else if (op == "matrix") {
    const auto rows = cfg.get_int("obs.rows", 1);
    const auto entries = cfg.get_list("obs.matrix");
    if (rows < 1 || static_cast<Index>(entries.size()) != rows * d) {
      throw ConfigError("obs.matrix needs obs.rows x " + std::to_string(d) + " entries");
    }
    const Matrix A =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            entries.data(), rows, d);
    p.observation =
        Observation::matrix(A, to_vector(cfg.get_list("obs.y")), cfg.get_double("obs.noise_std", 0.0));
  } else if (op == "interval") {
    if (d != 1) throw ConfigError("interval events need a 1-D prior");
    p.interval = IntervalEvent{cfg.get_double("obs.a"), cfg.get_double("obs.b")};
    if (!(p.interval->a < p.interval->b)) throw ConfigError("interval needs obs.a < obs.b");
  } else if (op != "none") {
    throw ConfigError("obs.operator must be none, mask, matrix or interval (got '" + op + "')");
  }
  return p;
}

std::shared_ptr<const EpsModel> model_from_config(const Config& cfg, const Benchmark& problem) {
  const std::string kind = cfg.get_string("model.kind", "oracle");
  if (kind == "oracle") return std::make_shared<AnalyticEpsModel>(problem.prior);
  if (kind == "checkpoint") {
    const fs::path path = cfg.get_string("model.checkpoint");
    ensure_file(path, "model checkpoint");
    auto loaded = load_checkpoint(path);
    if (loaded.net->dim() != problem.prior.dim()) {
      throw ConfigError("checkpoint dimension does not match the prior");
    }
    return std::make_shared<NetEpsModel>(std::move(loaded.net));
  }
  throw ConfigError("model.kind must be oracle or checkpoint (got '" + kind + "')");
}

std::shared_ptr<const ConditioningStrategy> strategy_from_config(const Config& cfg,
                                                                 const std::string& name,
                                                                 const Benchmark& problem) {
  if (name == "null") return std::make_shared<NullStrategy>();
  if (name == "exact_h") {
    if (!problem.observation && !problem.interval) {
      throw ConfigError("exact_h needs an observation or an interval event");
    }
    return std::make_shared<ExactHStrategy>(problem.h_transform());
  }
  if (name == "recon_guidance") {
    GuidanceSchedule g;
    g.kind = guidance_kind_from_string(cfg.get_string("guidance.kind", "constant"));
    g.gamma = cfg.get_double("guidance.gamma", 10.0);
    return std::make_shared<ReconGuidanceStrategy>(require_observation(problem, name), g,
                                                   cfg.get_bool("guidance.stop_gradient", false));
  }
  if (name == "replacement") {
    return std::make_shared<ReplacementStrategy>(require_observation(problem, name));
  }
  if (name == "repaint") {
    const std::string b = cfg.get_string("repaint.beta_index", "previous");
    if (b != "previous" && b != "current") {
      throw ConfigError("repaint.beta_index must be previous or current");
    }
    return std::make_shared<RepaintStrategy>(
        require_observation(problem, name), static_cast<int>(cfg.get_int("repaint.R", 5)),
        b == "previous" ? RepaintBeta::Previous : RepaintBeta::Current);
  }
  if (name == "rfdiff") return std::make_shared<RfDiffStrategy>(require_observation(problem, name));
  if (name == "amortised") {
    return std::make_shared<AmortisedStrategy>(require_observation(problem, name));
  }
  if (name == "classifier_free") {
    return std::make_shared<AmortisedStrategy>(Condition::aux(to_vector(cfg.get_list("cfg.y"))));
  }
  if (name == "finetuned_h") {
    const fs::path path = cfg.get_string("finetune.checkpoint");
    ensure_file(path, "finetune checkpoint");
    auto loaded = load_checkpoint(path);
    const NetMode mode = loaded.net->layout().mode;
    auto correction = std::make_shared<NetEpsModel>(std::move(loaded.net));
    if (mode == NetMode::Unconditional) {
      return std::make_shared<FinetunedHStrategy>(correction, FinetuneMode::Control);
    }
    if (mode == NetMode::Amortised) {
      const Observation& obs = require_observation(problem, name);
      if (obs.kind() != OperatorKind::Mask) throw ConfigError("finetuned_h residual needs a mask");
      return std::make_shared<FinetunedHStrategy>(
          correction, FinetuneMode::Residual,
          Condition::masked(obs.scattered_y(), obs.mask_vector()));
    }
    throw ConfigError("finetune.checkpoint must hold an unconditional or amortised network");
  }
  throw ConfigError(
      "unknown strategy '" + name +
      "'; known: null, exact_h, recon_guidance, replacement, repaint, rfdiff, amortised, "
      "classifier_free, finetuned_h");
}

SamplerConfig sampler_from_config(const Config& cfg) {
  SamplerConfig s;
  s.n_chains = cfg.get_int("sampler.n_chains", 1000);
  if (s.n_chains < 1) throw ConfigError("sampler.n_chains must be >= 1");
  s.store_trajectory = cfg.get_bool("sampler.store_trajectory", false);
  s.sigma_rule = sigma_rule_from_string(cfg.get_string("sampler.sigma_rule", "sqrt_beta"));
  s.seed = cfg.get_u64("seed");
  return s;
}

namespace {

struct Context {
  Config cfg;
  fs::path out_dir;
  std::ostream& out;
  std::ostream& err;
};

NetLayout layout_from_config(const Config& cfg, Index dim, NetMode mode) {
  NetLayout layout;
  layout.dim = dim;
  layout.mode = mode;
  layout.aux_dim = mode == NetMode::ClassifierFree ? 1 : 0;
  layout.hidden.clear();
  for (double h : cfg.has("net.hidden") ? cfg.get_list("net.hidden") : std::vector<double>{128, 128}) {
    if (h < 1 || h != std::floor(h)) throw ConfigError("net.hidden entries must be positive integers");
    layout.hidden.push_back(static_cast<Index>(h));
  }
  return layout;
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig t;
  t.batch_size = cfg.get_int("train.batch", 256);
  t.steps = static_cast<int>(cfg.get_int("train.steps", 1000));
  t.learning_rate = cfg.get_double("train.lr", 1e-3);
  t.lr_final_fraction = cfg.get_double("train.lr_final_fraction", 1.0);
  t.optimizer = optimizer_from_string(cfg.get_string("train.optimizer", "adam"));
  t.p_drop = cfg.get_double("train.p_drop", 0.0);
  t.seed = cfg.get_u64("seed");
  return t;
}

MaskSampler masks_from_config(const Config& cfg, Index d) {
  if (!cfg.has("train.mask")) return random_subset_masks(d);
  const auto words = cfg.get_words("train.mask");
  if (words.size() == 1 && words[0] == "random") return random_subset_masks(d);
  std::vector<double> v;
  for (const auto& w : words) v.push_back(parse_double(w, "train.mask"));
  const auto mask = mask_from_list(v, d);
  Vector m(d);
  for (Index i = 0; i < d; ++i) m[i] = mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  return fixed_mask(m);
}

std::shared_ptr<const EpsModel> frozen_from_config(const Config& cfg, const Benchmark& problem) {
  const std::string base = cfg.get_string("train.base", "oracle");
  if (base == "oracle") return std::make_shared<AnalyticEpsModel>(problem.prior);
  ensure_file(base, "base checkpoint");
  return std::make_shared<NetEpsModel>(load_checkpoint(base).net);
}

using TrainJob = std::function<std::pair<std::shared_ptr<EpsNet>, TrainResult>()>;

/// Reads every train.* and net.* key for one training run and returns the deferred run.
TrainJob plan_training(const Config& cfg, const Benchmark& problem, const NoiseSchedule& schedule,
                       const std::string& kind) {
  const Index d = problem.prior.dim();
  const GaussianMixture prior = problem.prior;
  const std::uint64_t seed = cfg.get_u64("seed");
  const double output_scale = cfg.get_double("net.output_scale", 0.0);
  const DataSampler data = [prior](Rng& rng) { return prior.sample_one(rng); };
  auto make_net = [&cfg, d, seed, output_scale](NetMode mode) {
    return std::make_shared<EpsNet>(layout_from_config(cfg, d, mode), seed, output_scale);
  };

  if (kind == "finetune_control") {
    auto net = make_net(NetMode::Unconditional);
    ControlConfig c;
    c.chains = cfg.get_int("train.chains", 128);
    c.steps = static_cast<int>(cfg.get_int("train.steps", 500));
    c.learning_rate = cfg.get_double("train.lr", 1e-3);
    c.lr_final_fraction = cfg.get_double("train.lr_final_fraction", 1.0);
    c.optimizer = optimizer_from_string(cfg.get_string("train.optimizer", "adam"));
    const std::string w = cfg.get_string("train.control_weight", "simplified");
    if (w != "simplified" && w != "exact") {
      throw ConfigError("train.control_weight must be simplified or exact");
    }
    c.weight = w == "exact" ? ControlWeight::Exact : ControlWeight::Simplified;
    c.max_backprop_steps = static_cast<int>(cfg.get_int("train.max_backprop_steps", 100));
    c.seed = seed;
    if (schedule.n_steps() > c.max_backprop_steps) {
      throw ConfigError("finetune_control back-propagates through all " +
                        std::to_string(schedule.n_steps()) +
                        " steps, above train.max_backprop_steps = " +
                        std::to_string(c.max_backprop_steps));
    }
    const auto frozen = frozen_from_config(cfg, problem);
    const Observation obs = require_observation(problem, kind);
    if (obs.is_hard()) throw ConfigError("finetune_control needs a soft observation (obs.noise_std > 0)");
    return [=] {
      auto result = finetune_control(*frozen, *net, obs, schedule, c);
      return std::make_pair(net, std::move(result));
    };
  }

  const TrainConfig t = train_config_from(cfg);
  if (kind == "unconditional") {
    auto net = make_net(NetMode::Unconditional);
    return [=] { return std::make_pair(net, train_unconditional(*net, data, schedule, t)); };
  }
  if (kind == "amortised" || kind == "rfdiff") {
    auto net = make_net(kind == "rfdiff" ? NetMode::RfDiff : NetMode::Amortised);
    const MaskSampler masks = masks_from_config(cfg, d);
    return [=] {
      return std::make_pair(net, kind == "rfdiff"
                                     ? train_rfdiff_style(*net, data, masks, schedule, t)
                                     : train_amortised(*net, data, masks, schedule, t));
    };
  }
  if (kind == "classifier_free") {
    auto net = make_net(NetMode::ClassifierFree);
    const JointSampler joint = [prior](Rng& rng) {
      Index c = 0;
      Vector x = prior.sample_one(rng, &c);
      return std::make_pair(std::move(x), Vector::Constant(1, static_cast<double>(c)));
    };
    return [=] { return std::make_pair(net, train_classifier_free(*net, joint, schedule, t)); };
  }
  if (kind == "finetune_offline") {
    auto net = make_net(NetMode::Amortised);
    const auto frozen = frozen_from_config(cfg, problem);
    const MaskSampler masks = masks_from_config(cfg, d);
    return [=] {
      return std::make_pair(net, finetune_offline(*frozen, *net, data, masks, schedule, t));
    };
  }
  throw ConfigError("train.kind must be one of unconditional, amortised, classifier_free, rfdiff, "
                    "finetune_offline, finetune_control (got '" + kind + "')");
}

std::string loss_csv(const TrainResult& r) {
  std::string s = "step,loss\n";
  for (std::size_t i = 0; i < r.loss.size(); ++i) {
    s += std::to_string(i + 1) + "," + format_double(r.loss[i]) + "\n";
  }
  return s;
}

void write_with_meta(const fs::path& path, const std::string& content, const Config& cfg) {
  write_file_atomic(path, content);
  fs::path meta = path;
  meta += ".meta";
  write_file_atomic(meta, "version = " + version_string() + "\n" + cfg.echo());
}

int cmd_train(Context& ctx) {
  const Config& cfg = ctx.cfg;
  cfg.get_u64("seed");
  const Benchmark problem = problem_from_config(cfg);
  const NoiseSchedule schedule = schedule_from_config(cfg);
  const std::string kind = cfg.get_string("train.kind");
  const TrainJob job = plan_training(cfg, problem, schedule, kind);
  cfg.get_string("output.dir", "");
  cfg.check_all_used();
  auto [net, result] = job();

  save_checkpoint(ctx.out_dir / "checkpoint.bin", *net, cfg.echo());
  write_with_meta(ctx.out_dir / "loss.csv", loss_csv(result), cfg);
  Vector steps = Vector::LinSpaced(static_cast<Index>(result.loss.size()), 1,
                                   static_cast<double>(result.loss.size()));
  Vector loss = to_vector(result.loss);
  write_file_atomic(ctx.out_dir / "loss.svg",
                    svg::line_plot("training loss (" + kind + ")", {{"loss", steps, loss}},
                                   meta_comment(cfg)));
  ctx.out << "trained " << kind << " network for " << result.loss.size() << " steps";
  if (!result.loss.empty()) ctx.out << ", final loss " << result.loss.back();
  ctx.out << "\nwrote " << (ctx.out_dir / "checkpoint.bin").string() << "\n";
  return kExitOk;
}

SampleBatch sample_from_config(const Config& cfg, const Benchmark& problem,
                               const NoiseSchedule& schedule, std::ostream& err) {
  const auto model = model_from_config(cfg, problem);
  const auto strategy = strategy_from_config(cfg, cfg.get_string("strategy", "null"), problem);
  const SamplerConfig sc = sampler_from_config(cfg);
  cfg.get_string("output.dir", "");
  cfg.check_all_used();
  SampleBatch batch = sample(*model, schedule, *strategy, sc);
  constexpr std::size_t kShown = 5;
  for (std::size_t i = 0; i < std::min(kShown, batch.diagnostics.size()); ++i) {
    err << "warning: " << batch.diagnostics[i] << "\n";
  }
  if (batch.diagnostics.size() > kShown) {
    err << "warning: " << batch.diagnostics.size() - kShown << " more chains aborted\n";
  }
  return batch;
}

int cmd_sample(Context& ctx) {
  const Config& cfg = ctx.cfg;
  const Benchmark problem = problem_from_config(cfg);
  const NoiseSchedule schedule = schedule_from_config(cfg);
  const SampleBatch batch = sample_from_config(cfg, problem, schedule, ctx.err);
  write_samples_csv(ctx.out_dir / "samples.csv", batch.final, cfg.echo());
  if (!batch.trajectory.empty()) write_trajectory(ctx.out_dir / "trajectory.bin", batch.trajectory);
  ctx.out << "wrote " << batch.n_chains() << " samples to "
          << (ctx.out_dir / "samples.csv").string();
  if (batch.n_aborted()) ctx.out << " (" << batch.n_aborted() << " chains aborted)";
  ctx.out << "\n";
  return kExitOk;
}

std::string density_csv(const QuadraturePosterior& q) {
  std::string s = "x,density\n";
  for (Index i = 0; i < q.grid.size(); ++i) {
    s += format_double(q.grid[i]) + "," + format_double(q.density[i]) + "\n";
  }
  return s;
}

int cmd_eval(Context& ctx) {
  const Config& cfg = ctx.cfg;
  const Benchmark problem = problem_from_config(cfg);
  const NoiseSchedule schedule = schedule_from_config(cfg);
  const std::uint64_t seed = cfg.get_u64("seed");
  const double tau = cfg.get_double("eval.tau", kDefaultInlierTau);
  const int n_proj = static_cast<int>(cfg.get_int("eval.projections", 200));
  const Index n_ref_key = cfg.get_int("eval.n_reference", 0);
  if (n_ref_key < 0) throw ConfigError("eval.n_reference must be >= 1");
  Matrix samples;
  if (cfg.has("eval.samples")) {
    const fs::path path = cfg.get_string("eval.samples");
    ensure_file(path, "samples file");
    cfg.get_string("output.dir", "");
    cfg.check_all_used();
    samples = read_samples_csv(path);
  } else {
    samples = sample_from_config(cfg, problem, schedule, ctx.err).final;
  }
  if (samples.cols() != problem.prior.dim()) throw ConfigError("sample dimension mismatch");
  const Index n_total = samples.rows();
  samples = finite_rows(samples);
  if (samples.rows() == 0) throw NumericalError("every chain aborted; nothing to evaluate");
  if (samples.rows() < n_total) {
    ctx.err << "warning: " << n_total - samples.rows() << " aborted chains excluded from metrics\n";
  }
  if (!problem.observation && !problem.interval) {
    throw ConfigError("eval needs an observation or interval event to define the target");
  }
  const Index n_ref = n_ref_key > 0 ? n_ref_key : samples.rows();
  Rng ref_rng(substream_seed(seed, 0x5EF0'0000'0000'0001ULL), 0);
  const Matrix reference = problem.reference_samples(n_ref, ref_rng);
  Rng metric_rng(substream_seed(seed, 0x5EF0'0000'0000'0002ULL), 0);
  MetricReport report = compare_samples(samples, reference, problem.unobserved,
                                        problem.observation, metric_rng, n_proj, tau);
  report.seeds = {seed};
  write_with_meta(ctx.out_dir / "metrics.csv",
                  metric_csv_header(samples.cols()) + "\n" + metric_csv_row(report) + "\n", cfg);

  if (problem.prior.dim() == 1) {
    std::optional<QuadraturePosterior> q;
    const double lo = -12.0, hi = 12.0;
    if (problem.interval) {
      q = quadrature_posterior_1d(problem.prior, *problem.interval, lo, hi, 20001);
    } else if (!problem.observation->is_hard()) {
      q = quadrature_posterior_1d(problem.prior, *problem.observation, lo, hi, 20001);
    }
    if (q) {
      write_with_meta(ctx.out_dir / "posterior_density.csv", density_csv(*q), cfg);
      if (q->tail_warning) ctx.err << "warning: quadrature grid misses posterior tail mass\n";
    }
  }
  ctx.out << metric_summary(report);
  return kExitOk;
}

int cmd_bench(Context& ctx) {
  const Config& cfg = ctx.cfg;
  const Benchmark bench = make_benchmark(cfg.get_string("benchmark"));
  const NoiseSchedule schedule = schedule_from_config(cfg);
  cfg.get_u64("seed");
  std::vector<std::string> names = cfg.has("bench.strategies")
                                       ? cfg.get_words("bench.strategies")
                                       : std::vector<std::string>{"exact_h", "replacement"};
  std::vector<std::uint64_t> seeds;
  if (cfg.has("bench.seeds")) {
    for (const auto& w : cfg.get_words("bench.seeds")) {
      const double v = parse_double(w, "bench.seeds");
      if (v < 0 || v != std::floor(v) || v > 9.0e15) {
        throw ConfigError("bench.seeds entries must be non-negative integers");
      }
      seeds.push_back(static_cast<std::uint64_t>(v));
    }
  } else {
    seeds = {1, 2, 3, 4, 5};
  }
  if (names.empty() || seeds.empty()) throw ConfigError("bench needs strategies and seeds");
  BenchSettings settings;
  settings.n_chains = cfg.get_int("sampler.n_chains", 4000);
  settings.n_reference = cfg.get_int("bench.n_reference", settings.n_chains);
  settings.sigma_rule = sigma_rule_from_string(cfg.get_string("sampler.sigma_rule", "sqrt_beta"));
  if (settings.n_chains < 1 || settings.n_reference < 1) throw ConfigError("bench sizes must be >= 1");

  // Network strategies are trained on the fly from the train.* keys.
  std::vector<std::pair<std::string, std::string>> plan;
  for (const auto& n : names) {
    std::string train_kind;
    if (n == "amortised") train_kind = "amortised";
    if (n == "rfdiff") train_kind = "rfdiff";
    if (n == "finetuned_h") train_kind = "finetune_offline";
    plan.emplace_back(n, train_kind);
  }
  const auto oracle = std::make_shared<AnalyticEpsModel>(bench.prior);
  std::vector<BenchEntry> entries;
  std::vector<std::pair<std::size_t, TrainJob>> jobs;
  std::shared_ptr<const EpsModel> frozen;
  for (const auto& [n, kind] : plan) {
    if (kind.empty()) {
      entries.push_back({n, oracle, strategy_from_config(cfg, n, bench)});
      continue;
    }
    require_observation(bench, n);
    jobs.emplace_back(entries.size(), plan_training(cfg, bench, schedule, kind));
    entries.push_back({n, nullptr, nullptr});
    if (kind == "finetune_offline") frozen = frozen_from_config(cfg, bench);
  }
  cfg.get_string("output.dir", "");
  cfg.check_all_used();

  for (auto& [index, job] : jobs) {
    BenchEntry& entry = entries[index];
    const Observation& obs = *bench.observation;
    auto [net, result] = job();
    ctx.out << "trained network for '" << entry.label << "' (" << result.loss.size()
            << " steps)\n";
    auto model = std::make_shared<NetEpsModel>(net);
    if (entry.label == "amortised") {
      entry.model = model;
      entry.strategy = std::make_shared<AmortisedStrategy>(obs);
    } else if (entry.label == "rfdiff") {
      entry.model = model;
      entry.strategy = std::make_shared<RfDiffStrategy>(obs);
    } else {
      entry.model = frozen;
      entry.strategy = std::make_shared<FinetunedHStrategy>(
          model, FinetuneMode::Residual, Condition::masked(obs.scattered_y(), obs.mask_vector()));
    }
  }

  std::vector<Matrix> samples;
  const auto rows = run_benchmark(bench, schedule, entries, seeds, settings, &samples);
  std::string csv = "benchmark,strategy,seed," + metric_csv_header(bench.prior.dim()) + "\n";
  for (const auto& r : rows) {
    csv += bench.name + "," + r.label + "," + std::to_string(r.seed) + "," +
           metric_csv_row(r.report) + "\n";
  }
  write_with_meta(ctx.out_dir / "bench.csv", csv, cfg);

  const auto summary = summarise(rows);
  std::ostringstream table;
  table << "benchmark " << bench.name << " (" << bench.description << ")\n"
        << "W1 over unobserved coordinates, mean +- standard error over " << seeds.size()
        << " seeds\n";
  std::vector<svg::Bar> bars;
  for (const auto& s : summary) {
    char line[128];
    std::snprintf(line, sizeof line, "  %-16s %.5f +- %.5f\n", s.label.c_str(), s.mean, s.std_error);
    table << line;
    bars.push_back({s.label, s.mean, s.std_error});
  }
  write_file_atomic(ctx.out_dir / "bench_summary.txt", table.str() + "\n# config\n" + cfg.echo());
  write_file_atomic(ctx.out_dir / "bench_w1.svg",
                    svg::bar_chart(bench.name + ": W1 to exact posterior", "W1 (unobserved)",
                                   bars, meta_comment(cfg)));

  // Samples of the first seed, plus the exact reference, as a scatter (d >= 2) or histogram.
  std::vector<svg::Series> series;
  Rng ref_rng(substream_seed(seeds.front(), 0x5EF0'0000'0000'0001ULL), 0);
  const Matrix reference = bench.reference_samples(settings.n_reference, ref_rng);
  auto add = [&](const std::string& label, const Matrix& m) {
    const Index n = std::min<Index>(m.rows(), 1500);
    if (bench.prior.dim() >= 2) {
      const Index yj = bench.unobserved.empty() ? 1 : bench.unobserved.front();
      const Index xj = yj == 0 ? 1 : 0;
      series.push_back({label, m.col(xj).head(n), m.col(yj).head(n)});
    } else {
      const double lo = reference.minCoeff() - 1.0, hi = reference.maxCoeff() + 1.0;
      const Index bins = 60;
      Vector centers(bins), counts = Vector::Zero(bins);
      const double w = (hi - lo) / bins;
      for (Index b = 0; b < bins; ++b) centers[b] = lo + (b + 0.5) * w;
      for (Index i = 0; i < m.rows(); ++i) {
        const auto b = static_cast<Index>(std::floor((m(i, 0) - lo) / w));
        if (b >= 0 && b < bins) counts[b] += 1.0;
      }
      series.push_back({label, centers, counts / (static_cast<double>(m.rows()) * w)});
    }
  };
  add("exact", reference);
  for (std::size_t e = 0; e < entries.size(); ++e) add(entries[e].label, samples[e]);
  const std::string title = bench.name + ": samples (seed " + std::to_string(seeds.front()) + ")";
  write_file_atomic(ctx.out_dir / "bench_samples.svg",
                    bench.prior.dim() >= 2 ? svg::scatter_plot(title, series, meta_comment(cfg))
                                           : svg::line_plot(title, series, meta_comment(cfg)));
  ctx.out << table.str();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"doob-lab: conditional diffusion laboratory on analytic toy problems"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  for (const char* name : {"train", "sample", "eval", "bench"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--seed", seed, "master seed (overrides the config's seed key)");
    sub->add_option("--out", out_dir, "output directory");
  }
  app.get_subcommand("train")->description("train or finetune a network; writes checkpoint.bin and loss.csv");
  app.get_subcommand("sample")->description("run a conditioning strategy; writes samples.csv");
  app.get_subcommand("eval")->description("score samples against the exact posterior; writes metrics.csv");
  app.get_subcommand("bench")->description("compare strategies on a registered benchmark over seeds");

  std::vector<const char*> argv{"doob-lab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    Config cfg = Config::load(config_path);
    if (seed) cfg.set("seed", std::to_string(*seed));
    fs::path dir = !out_dir.empty() ? fs::path(out_dir) : fs::path(cfg.get_string("output.dir", "out"));
    Context ctx{std::move(cfg), dir, out, err};
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "train") return cmd_train(ctx);
    if (cmd == "sample") return cmd_sample(ctx);
    if (cmd == "eval") return cmd_eval(ctx);
    return cmd_bench(ctx);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainingDivergence& e) {
    err << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace doob::cli
