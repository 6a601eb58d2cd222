#include <cmath>

#include "doob/benchmarks.hpp"
#include "doob/conditioning.hpp"
#include "doob/engine.hpp"
#include "doob/eval.hpp"
#include "doob/nets.hpp"
#include "support.hpp"

using namespace doob;
using test::vec1;

namespace {

const NoiseSchedule kSched = make_linear_schedule(1000, 1e-4, 2e-2);

NetLayout layout_for(Index d, NetMode mode, std::vector<Index> hidden = {128, 128}) {
  NetLayout l;
  l.dim = d;
  l.mode = mode;
  l.aux_dim = mode == NetMode::ClassifierFree ? 1 : 0;
  l.hidden = std::move(hidden);
  return l;
}

TrainConfig quick(int steps, std::uint64_t seed = 1) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = 64;
  c.seed = seed;
  return c;
}

TrainConfig long_run(int steps, std::uint64_t seed = 1) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = 256;
  c.learning_rate = 1e-3;
  c.lr_final_fraction = 0.05;
  c.seed = seed;
  return c;
}

DataSampler gaussian_data(const GaussianMixture& p) {
  return [p](Rng& r) { return p.sample_one(r); };
}

double window_mean(const std::vector<double>& v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = v.size() - n; i < v.size(); ++i) s += v[i];
  return s / static_cast<double>(n);
}

/// Max |score_net - score_exact| over a grid, at a set of steps.
double max_score_error(const EpsModel& model, const NoiseSchedule& s, const Condition& cond,
                       const std::vector<int>& steps, const Vector& grid, Index coord, const Vector& base,
                       const std::function<double(int, const Vector&)>& exact) {
  double worst = 0.0;
  for (int k : steps) {
    Matrix X = base.replicate(1, grid.size());
    X.row(coord) = grid.transpose();
    const Matrix score = eps_to_score(s, k, model.eps(s, k, X, cond));
    for (Index j = 0; j < grid.size(); ++j) {
      worst = std::max(worst, std::abs(score(coord, j) - exact(k, X.col(j))));
    }
  }
  return worst;
}

/// The eps-to-score conversion divides by sqrt(1 - ab_k), so grids are checked from N/4 on.
const std::vector<int> kCheckSteps{250, 500, 750, 1000};

const GaussianMixture kUnit = GaussianMixture::single(Vector::Zero(1), Matrix::Identity(1, 1));

}  // namespace

TEST(Training, ZeroStepsLeaveNetworkUnchanged) {
  EpsNet net(layout_for(2, NetMode::Unconditional, {8}), 3, 1.0);
  const Vector before = net.mlp().params();
  const auto r = train_unconditional(net, gaussian_data(GaussianMixture::single(Vector::Zero(2), Matrix::Identity(2, 2))),
                                     kSched, quick(0));
  EXPECT_TRUE(r.loss.empty());
  EXPECT_EQ(net.mlp().params(), before);
}

TEST(Training, InitialLossIsNearDimension) {
  for (Index d : {1, 2, 4}) {
    EpsNet net(layout_for(d, NetMode::Unconditional), 1, 0.0);
    TrainConfig c = quick(1);
    c.batch_size = 4096;
    const auto r = train_unconditional(net, gaussian_data(GaussianMixture::single(Vector::Zero(d), Matrix::Identity(d, d))),
                                       kSched, c);
    EXPECT_NEAR(r.loss[0], static_cast<double>(d), 0.3 * d);
  }
}

TEST(Training, InvalidSettingsAreConfigErrors) {
  EpsNet net(layout_for(1, NetMode::Unconditional, {4}), 1);
  TrainConfig c = quick(1);
  c.batch_size = 0;
  EXPECT_THROW(train_unconditional(net, gaussian_data(kUnit), kSched, c), ConfigError);
  EpsNet am(layout_for(1, NetMode::Amortised, {4}), 1);
  c = quick(1);
  c.p_drop = 1.5;
  EXPECT_THROW(train_amortised(am, gaussian_data(kUnit), random_subset_masks(1), kSched, c), ConfigError);
  EXPECT_THROW(train_amortised(net, gaussian_data(kUnit), random_subset_masks(1), kSched, quick(1)), ConfigError);
  EXPECT_THROW(train_rfdiff_style(am, gaussian_data(kUnit), random_subset_masks(1), kSched, quick(1)), ConfigError);
}

TEST(Training, DivergenceIsReported) {
  EpsNet net(layout_for(1, NetMode::Unconditional, {8}), 1, 1.0);
  const DataSampler bad = [](Rng&) { return vec1(std::numeric_limits<double>::quiet_NaN()); };
  EXPECT_THROW(train_unconditional(net, bad, kSched, quick(3)), TrainingDivergence);
}

TEST(Training, FullDropoutBatchesReplayUnconditionalDraws) {
  const auto prior = GaussianMixture::single(Vector::Zero(3), Matrix::Identity(3, 3));
  const EpsNet plain(layout_for(3, NetMode::Unconditional, {8}), 1);
  const EpsNet am(layout_for(3, NetMode::Amortised, {8}), 1);
  const EpsNet rf(layout_for(3, NetMode::RfDiff, {8}), 1);
  Rng r0(5, 0), r1(5, 0), s1(5, 1), r2(5, 0), s2(5, 1);
  const auto u = make_unconditional_batch(plain, gaussian_data(prior), kSched, 32, r0);
  const auto a = make_amortised_batch(am, gaussian_data(prior), random_subset_masks(3), kSched, 32, 1.0, r1, s1);
  const auto f = make_rfdiff_batch(rf, gaussian_data(prior), random_subset_masks(3), kSched, 32, 1.0, r2, s2);
  EXPECT_EQ(a.target, u.target);
  EXPECT_EQ(f.target, u.target);
  EXPECT_EQ(a.input.topRows(plain.input_dim()), u.input);
  EXPECT_EQ(f.input.topRows(plain.input_dim()), u.input);
  EXPECT_TRUE((a.input.bottomRows(3).array() == 0.0).all());
  EXPECT_TRUE((a.input.middleRows(plain.input_dim(), 3).array() == kMaskPad).all());
  EXPECT_TRUE(f.weight.isOnes(0.0));
}

TEST(Training, ClassifierFreeWithFullDropoutReproducesUnconditionalTrace) {
  // With zero weights on the (all-zero) null-condition channels the two networks compute the
  // same function, and those weights never receive gradient.
  const auto prior = GaussianMixture::single(Vector::Zero(2), Matrix::Identity(2, 2));
  EpsNet plain(layout_for(2, NetMode::Unconditional, {16, 16}), 1, 1.0);
  EpsNet cf(layout_for(2, NetMode::ClassifierFree, {16, 16}), 1, 1.0);
  const Index in = plain.input_dim();
  cf.mlp().weight(0).setZero();
  cf.mlp().weight(0).leftCols(in) = plain.mlp().weight(0);
  cf.mlp().bias(0) = plain.mlp().bias(0);
  for (std::size_t l = 1; l < plain.mlp().n_layers(); ++l) {
    cf.mlp().weight(l) = plain.mlp().weight(l);
    cf.mlp().bias(l) = plain.mlp().bias(l);
  }
  // A joint sampler that draws exactly what the unconditional trainer draws.
  const JointSampler joint = [&](Rng& r) { return std::make_pair(prior.sample_one(r), vec1(0.0)); };
  TrainConfig c = quick(200, 7);
  const auto ru = train_unconditional(plain, gaussian_data(prior), kSched, c);
  c.p_drop = 1.0;
  const auto rc = train_classifier_free(cf, joint, kSched, c);
  ASSERT_EQ(ru.loss.size(), rc.loss.size());
  for (std::size_t i = 0; i < ru.loss.size(); ++i) EXPECT_NEAR(ru.loss[i], rc.loss[i], 1e-12 * ru.loss[i]);
  EXPECT_TRUE(cf.mlp().weight(0).rightCols(2).isZero(0.0));
}

TEST(Training, EmptyMasksTrainLikeUnconditional) {
  const auto prior = GaussianMixture::single(Vector::Zero(2), Matrix::Identity(2, 2));
  EpsNet plain(layout_for(2, NetMode::Unconditional, {32}), 1);
  EpsNet am(layout_for(2, NetMode::Amortised, {32}), 1);
  TrainConfig c = quick(1500, 3);
  const auto ru = train_unconditional(plain, gaussian_data(prior), kSched, c);
  const auto ra = train_amortised(am, gaussian_data(prior), fixed_mask(Vector::Zero(2)), kSched, c);
  const double mu = window_mean(ru.loss, 500), ma = window_mean(ra.loss, 500);
  EXPECT_NEAR(ma, mu, 0.05 * mu);
}

TEST(Training, AllMotifRfDiffLeavesParametersUnchanged) {
  const auto prior = GaussianMixture::single(Vector::Zero(2), Matrix::Identity(2, 2));
  EpsNet net(layout_for(2, NetMode::RfDiff, {16}), 2, 1.0);
  const Vector before = net.mlp().params();
  const auto r = train_rfdiff_style(net, gaussian_data(prior), fixed_mask(Vector::Ones(2)), kSched, quick(20));
  EXPECT_EQ(net.mlp().params(), before);
  for (double l : r.loss) EXPECT_EQ(l, 0.0);
}

TEST(Training, ZeroResidualFinetuneLossEqualsFrozenLoss) {
  const auto prior = GaussianMixture::single(Vector::Zero(2), Matrix::Identity(2, 2));
  const auto frozen_net = std::make_shared<const EpsNet>(layout_for(2, NetMode::Unconditional, {16}), 4, 1.0);
  const NetEpsModel frozen(frozen_net);
  const EpsNet h_net(layout_for(2, NetMode::Amortised, {16}), 5, 0.0);
  Rng r0(9, 0), r1(9, 0), s1(9, 1);
  const auto plain = make_unconditional_batch(*frozen_net, gaussian_data(prior), kSched, 128, r0);
  const auto fine = make_finetune_batch(frozen, h_net, gaussian_data(prior), random_subset_masks(2), kSched, 128,
                                        0.2, r1, s1);
  EXPECT_NEAR(loss_and_grad(h_net, fine, nullptr), loss_and_grad(*frozen_net, plain, nullptr), 1e-12);
}

TEST(Training, MaskSamplers) {
  Rng rng(1);
  const auto m = random_subset_masks(4);
  for (int i = 0; i < 200; ++i) {
    const Vector v = m(rng);
    EXPECT_GT(v.sum(), 0.0);
    EXPECT_LT(v.sum(), 4.0);
  }
  EXPECT_EQ(random_subset_masks(1)(rng), Vector::Ones(1));
  EXPECT_EQ(fixed_mask(vec1(0.0))(rng), Vector::Zero(1));
}

TEST(Training, OptimizerNames) {
  EXPECT_EQ(optimizer_from_string("sgd"), OptimizerKind::Sgd);
  EXPECT_EQ(optimizer_from_string(to_string(OptimizerKind::Adam)), OptimizerKind::Adam);
  EXPECT_THROW(optimizer_from_string("lbfgs"), ConfigError);
}

TEST(Training, SgdReducesLossOnGaussianData) {
  EpsNet net(layout_for(1, NetMode::Unconditional, {32}), 1);
  TrainConfig c = quick(2000);
  c.optimizer = OptimizerKind::Sgd;
  c.learning_rate = 0.05;
  const auto r = train_unconditional(net, gaussian_data(kUnit), kSched, c);
  // For unit-normal data the best predictor is sqrt(1 - ab) x, leaving E_k[ab_k] irreducible.
  const double floor = kSched.alpha_bars().tail(1000).mean();
  EXPECT_GT(r.loss.front(), 0.7);
  EXPECT_LT(window_mean(r.loss, 500), floor + 0.03);
}

// --- convergence ----------------------------------------------------------------------------

TEST(Convergence, UnconditionalScoreOnStandardNormal) {
  EpsNet net(layout_for(1, NetMode::Unconditional), 1);
  train_unconditional(net, gaussian_data(kUnit), kSched, long_run(20000));
  const NetEpsModel model(std::make_shared<const EpsNet>(net));
  const double err = max_score_error(model, kSched, {}, kCheckSteps, Vector::LinSpaced(61, -3, 3), 0,
                                     Vector::Zero(1), [](int, const Vector& x) { return -x[0]; });
  EXPECT_LT(err, 0.1);
}

TEST(Convergence, ClassifierFreeLabelSelectsComponent) {
  const auto bench = make_benchmark("mixture-posterior-1d");
  const GaussianMixture prior = bench.prior;
  const JointSampler joint = [&](Rng& r) {
    Index comp = 0;
    const Vector x = prior.sample_one(r, &comp);
    return std::make_pair(x, vec1(static_cast<double>(comp)));
  };
  EpsNet net(layout_for(1, NetMode::ClassifierFree, {64, 64}), 2);
  TrainConfig c = long_run(8000, 2);
  c.p_drop = 0.1;
  train_classifier_free(net, joint, kSched, c);
  const NetEpsModel model(std::make_shared<const EpsNet>(net));
  SamplerConfig sc;
  sc.n_chains = 4000;
  sc.seed = 3;
  const auto s = make_scaled_linear_schedule(250);
  const auto b = sample(model, s, AmortisedStrategy(Condition::aux(vec1(0.0))), sc);
  const double m0 = prior.mean(0)[0], m1 = prior.mean(1)[0];
  const double near0 = ((b.final.col(0).array() - m0).abs() < (b.final.col(0).array() - m1).abs()).cast<double>().mean();
  EXPECT_GT(near0, 0.95);
}

TEST(Convergence, ClassifierFreeWithUninformativeLabelLearnsMarginalScore) {
  const JointSampler joint = [](Rng& r) {
    const Vector x = vec1(r.normal());
    return std::make_pair(x, vec1(r.normal()));
  };
  EpsNet net(layout_for(1, NetMode::ClassifierFree, {64, 64}), 4);
  TrainConfig c = long_run(10000, 4);
  c.p_drop = 0.2;
  train_classifier_free(net, joint, kSched, c);
  const NetEpsModel model(std::make_shared<const EpsNet>(net));
  for (double y : {-1.0, 0.0, 1.0}) {
    const double err = max_score_error(model, kSched, Condition::aux(vec1(y)), kCheckSteps, Vector::LinSpaced(41, -2, 2),
                                       0, Vector::Zero(1), [](int, const Vector& x) { return -x[0]; });
    EXPECT_LT(err, 0.15) << "y = " << y;
  }
}

TEST(Convergence, AmortisedScoreApproachesConditionalScore) {
  const auto bench = make_benchmark("correlated-gaussian-2d");
  const Observation& obs = *bench.observation;
  const auto post = true_posterior(bench.prior, obs);
  const Condition cond = Condition::masked(obs.scattered_y(), obs.mask_vector());
  // Grid around the conditional: x_k[0] near sqrt(ab) y and x_k[1] across the bulk.
  auto grid_error = [&](const EpsNet& net) {
    const NetEpsModel model(std::make_shared<const EpsNet>(net));
    double worst = 0.0;
    for (int k : kCheckSteps) {
      Matrix X(2, 0);
      for (double a : {-0.5, 0.0, 0.5}) {
        for (double b = -2.0; b <= 2.0001; b += 0.25) {
          X.conservativeResize(2, X.cols() + 1);
          X.col(X.cols() - 1) << kSched.sqrt_alpha_bar(k) * obs.y()[0] + a * kSched.sqrt_one_minus_alpha_bar(k), b;
        }
      }
      const Matrix got = eps_to_score(kSched, k, model.eps(kSched, k, X, cond));
      const Matrix want = post.noised_score(kSched, k, X);
      worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
    }
    return worst;
  };
  EpsNet net(layout_for(2, NetMode::Amortised), 5);
  TrainConfig c = long_run(10000, 5);
  c.p_drop = 0.2;
  std::vector<double> errs;
  c.hook_every = 2000;
  c.hook = [&](int, const EpsNet& n) { errs.push_back(grid_error(n)); };
  train_amortised(net, gaussian_data(bench.prior), random_subset_masks(2), kSched, c);
  ASSERT_EQ(errs.size(), 5u);
  int increases = 0;
  for (std::size_t i = 1; i < errs.size(); ++i) increases += errs[i] > errs[i - 1];
  EXPECT_LE(increases, 1);
  EXPECT_LT(errs.back(), errs.front());
  EXPECT_LT(errs.back(), 0.15);
}

TEST(Convergence, RfDiffConditionalMean) {
  const auto bench = make_benchmark("correlated-gaussian-2d");
  EpsNet net(layout_for(2, NetMode::RfDiff, {64, 64}), 6);
  TrainConfig c = long_run(8000, 6);
  c.p_drop = 0.2;
  train_rfdiff_style(net, gaussian_data(bench.prior), random_subset_masks(2), kSched, c);
  const NetEpsModel model(std::make_shared<const EpsNet>(net));
  SamplerConfig sc;
  sc.n_chains = 4000;
  sc.seed = 7;
  const auto b = sample(model, make_scaled_linear_schedule(250), RfDiffStrategy(*bench.observation), sc);
  const double exact = true_posterior(bench.prior, *bench.observation).mean()[1];
  EXPECT_NEAR(b.final.col(1).mean(), exact, 0.15);
  EXPECT_TRUE((b.final.col(0).array() == bench.observation->y()[0]).all());
}

TEST(Convergence, OfflineFinetuneBeatsReplacementAndLearnsH) {
  const auto bench = make_benchmark("correlated-gaussian-2d");
  const Observation& obs = *bench.observation;
  const auto frozen = std::make_shared<const AnalyticEpsModel>(bench.prior);
  EpsNet h_net(layout_for(2, NetMode::Amortised, {64, 64}), 8);
  TrainConfig c = long_run(8000, 8);
  c.p_drop = 0.2;
  finetune_offline(*frozen, h_net, gaussian_data(bench.prior), random_subset_masks(2), kSched, c);
  const auto h_model = std::make_shared<const NetEpsModel>(std::make_shared<const EpsNet>(h_net));
  const Condition cond = Condition::masked(obs.scattered_y(), obs.mask_vector());

  // Residual against -sqrt(1 - ab) grad log h.
  const auto h = bench.h_transform();
  double worst = 0.0;
  for (int k : kCheckSteps) {
    for (double a : {-0.5, 0.0, 0.5}) {
      for (double b = -2.0; b <= 2.0001; b += 0.5) {
        Vector x(2);
        x << kSched.sqrt_alpha_bar(k) * obs.y()[0] + a * kSched.sqrt_one_minus_alpha_bar(k), b;
        const Vector want = -kSched.sqrt_one_minus_alpha_bar(k) * h_value_and_grad(h, kSched, k, x).grad_log_h;
        worst = std::max(worst, (h_model->eps(kSched, k, x, cond).col(0) - want).cwiseAbs().maxCoeff());
      }
    }
  }
  EXPECT_LT(worst, 0.2);

  const auto s = make_scaled_linear_schedule(250);
  double w_fine = 0.0, w_repl = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SamplerConfig sc;
    sc.n_chains = 4000;
    sc.seed = seed;
    const auto fine = sample(*frozen, s, FinetunedHStrategy(h_model, FinetuneMode::Residual, cond), sc);
    const auto repl = sample(*frozen, s, ReplacementStrategy(obs), sc);
    Rng rng(seed, 99);
    const Matrix ref = bench.reference_samples(4000, rng);
    w_fine += wasserstein1_1d(fine.final.col(1), ref.col(1));
    w_repl += wasserstein1_1d(repl.final.col(1), ref.col(1));
  }
  EXPECT_LT(w_fine, w_repl);
}
