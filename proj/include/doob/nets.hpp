#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "doob/mlp.hpp"
#include "doob/model.hpp"
#include "doob/oracle.hpp"

namespace doob {

/// Which conditioning channels the network's input carries.
enum class NetMode {
  Unconditional,   ///< [x, time]
  Amortised,       ///< [x, time, mask*x0 + (1-mask)*pad, mask]
  ClassifierFree,  ///< [x, time, y, present-flag]
  RfDiff,          ///< [x, time, per-coordinate time / N, mask]
};

std::string to_string(NetMode mode);
NetMode net_mode_from_string(const std::string& name);

struct NetLayout {
  Index dim = 1;
  NetMode mode = NetMode::Unconditional;
  Index aux_dim = 0;  ///< ClassifierFree only
  std::vector<Index> hidden{128, 128};
};

/// Sinusoidal time features: 8 frequencies, sin and cos of each.
inline constexpr int kTimeFrequencies = 8;
inline constexpr Index kTimeFeatures = 2 * kTimeFrequencies;
/// Value written to unobserved coordinates of the masked-data channel.
inline constexpr double kMaskPad = -2.0;

/// Multilayer-perceptron noise predictor together with its input encoding.
class EpsNet {
 public:
  EpsNet(NetLayout layout, std::uint64_t init_seed, double output_scale = 0.0);

  const NetLayout& layout() const { return layout_; }
  Index dim() const { return layout_.dim; }
  Index condition_channels() const;
  Index input_dim() const { return layout_.dim + kTimeFeatures + condition_channels(); }
  ModelCaps caps() const;

  Mlp<double>& mlp() { return mlp_; }
  const Mlp<double>& mlp() const { return mlp_; }

  /// Network input for samples X (d x B) at continuous times t (B) with channels C.
  Matrix encode(const Matrix& X, const Vector& t, const Matrix& channels) const;

  /// Conditioning channels for one sample. `cond.kind == None` gives the null encoding.
  /// `t` is the sample's continuous time k / N.
  Vector channels_for(const Condition& cond, double t, int n_steps) const;

  Matrix predict(const Matrix& input) const { return mlp_.forward(input); }

 private:
  NetLayout layout_;
  Mlp<double> mlp_;
};

void time_features(double t, Eigen::Ref<Vector> out);

/// EpsModel adapter over a trained (immutable) network.
class NetEpsModel final : public EpsModel {
 public:
  explicit NetEpsModel(std::shared_ptr<const EpsNet> net) : net_(std::move(net)) {}

  Index dim() const override { return net_->dim(); }
  ModelCaps caps() const override { return net_->caps(); }
  std::string describe() const override;
  Matrix eps(const NoiseSchedule& schedule, int k, const Matrix& X,
             const Condition& cond) const override;
  Matrix eps_vjp(const NoiseSchedule& schedule, int k, const Matrix& X, const Condition& cond,
                 const Matrix& V) const override;
  Matrix eps_mixed(const NoiseSchedule& schedule, const std::vector<int>& steps, const Matrix& X,
                   const Condition& cond) const override;

  const EpsNet& net() const { return *net_; }

 private:
  Matrix input_for(const NoiseSchedule& schedule, int k, const Matrix& X,
                   const Condition& cond) const;
  std::shared_ptr<const EpsNet> net_;
};

// --- training --------------------------------------------------------------------------------

enum class OptimizerKind { Sgd, Adam };
std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct TrainConfig {
  Index batch_size = 256;
  int steps = 1000;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  /// Probability that a training example carries the null condition.
  double p_drop = 0.0;
  std::uint64_t seed = 0;
  /// Linear decay of the learning rate to this fraction of its start value (1 = constant).
  double lr_final_fraction = 1.0;
  /// Called after every `hook_every` optimizer steps, when set.
  std::function<void(int, const EpsNet&)> hook;
  int hook_every = 0;
};

struct TrainResult {
  std::vector<double> loss;  ///< one entry per optimizer step
};

using DataSampler = std::function<Vector(Rng&)>;
/// Returns (x0, y) pairs for classifier-free training.
using JointSampler = std::function<std::pair<Vector, Vector>(Rng&)>;
/// Returns a 0/1 mask of length d.
using MaskSampler = std::function<Vector(Rng&)>;

/// One minibatch of the weighted eps-regression loss
///   L = (1/B) sum_b sum_i w_ib (target_ib - net(input_b)_i)^2.
struct LossBatch {
  Matrix input;
  Matrix target;
  Matrix weight;
};

double loss_and_grad(const EpsNet& net, const LossBatch& batch, Vector* grad);

/// Minibatch builders. Each consumes the main stream `data` for (x0, k, eps), in that order
/// per example, and the side stream `side` for dropout and masks, so that conditional
/// trainers with p_drop = 1 replay the unconditional trainer exactly.
LossBatch make_unconditional_batch(const EpsNet& net, const DataSampler& data,
                                   const NoiseSchedule& schedule, Index batch, Rng& rng);
LossBatch make_amortised_batch(const EpsNet& net, const DataSampler& data,
                               const MaskSampler& masks, const NoiseSchedule& schedule,
                               Index batch, double p_drop, Rng& rng, Rng& side);
LossBatch make_classifier_free_batch(const EpsNet& net, const JointSampler& data,
                                     const NoiseSchedule& schedule, Index batch, double p_drop,
                                     Rng& rng, Rng& side);
LossBatch make_rfdiff_batch(const EpsNet& net, const DataSampler& data, const MaskSampler& masks,
                            const NoiseSchedule& schedule, Index batch, double p_drop, Rng& rng,
                            Rng& side);
/// Offline finetuning batch: target becomes eps - eps_theta(x_k, k) of the frozen model.
LossBatch make_finetune_batch(const EpsModel& frozen, const EpsNet& h_net,
                              const DataSampler& data, const MaskSampler& masks,
                              const NoiseSchedule& schedule, Index batch, double p_drop, Rng& rng,
                              Rng& side);

TrainResult train_unconditional(EpsNet& net, const DataSampler& data,
                                const NoiseSchedule& schedule, const TrainConfig& cfg);
TrainResult train_amortised(EpsNet& net, const DataSampler& data, const MaskSampler& masks,
                            const NoiseSchedule& schedule, const TrainConfig& cfg);
TrainResult train_classifier_free(EpsNet& net, const JointSampler& data,
                                  const NoiseSchedule& schedule, const TrainConfig& cfg);
TrainResult train_rfdiff_style(EpsNet& net, const DataSampler& data, const MaskSampler& masks,
                               const NoiseSchedule& schedule, const TrainConfig& cfg);
/// Trains h_net so that eps_theta + eps_phi fits the noise; `frozen` receives no gradient.
TrainResult finetune_offline(const EpsModel& frozen, EpsNet& h_net, const DataSampler& data,
                             const MaskSampler& masks, const NoiseSchedule& schedule,
                             const TrainConfig& cfg);

/// Masks with each coordinate observed independently with probability 1/2, redrawn until the
/// mask is neither empty nor full (for d = 1, always the full mask).
MaskSampler random_subset_masks(Index dim);
MaskSampler fixed_mask(Vector mask);

// --- stochastic-control finetuning -----------------------------------------------------------

enum class ControlWeight {
  Simplified,  ///< beta_k / 2
  Exact,       ///< 2 lambda_k^2 / beta_k with lambda_k = 1 - sqrt(1 - beta_k)
};

struct ControlConfig {
  Index chains = 128;  ///< chains per optimizer step
  int steps = 500;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  ControlWeight weight = ControlWeight::Simplified;
  int max_backprop_steps = 100;
  std::uint64_t seed = 0;
  double lr_final_fraction = 1.0;
};

/// Noise realisation of the controlled reverse chain: x_N and the per-step z_k (k = N..2).
struct ChainNoise {
  Matrix x_init;           ///< d x B
  std::vector<Matrix> z;   ///< z[k] for k in [2, N]; entries 0 and 1 unused
  static ChainNoise draw(Index dim, Index chains, int n_steps, Rng& rng);
};

/// Control f(k, x) on the score scale; the step uses eps' = eps_theta - sqrt(1 - ab_k) f.
using ControlFn = std::function<Matrix(int, const Matrix&)>;

double control_weight(const NoiseSchedule& schedule, int k, ControlWeight weight);

/// Monte-Carlo value of  E[ sum_k w_k ||f(k, x_k)||^2 - log p(y | x_0) ]  for a fixed control.
double control_objective(const EpsModel& frozen, const ControlFn& control, const Observation& obs,
                         const NoiseSchedule& schedule, ControlWeight weight,
                         const ChainNoise& noise);

/// Same objective with f given by `f_net`; when `grad` is non-null, back-propagates through
/// the whole chain and adds d objective / d params into it.
double control_objective_and_grad(const EpsModel& frozen, const EpsNet& f_net,
                                  const Observation& obs, const NoiseSchedule& schedule,
                                  ControlWeight weight, const ChainNoise& noise, Vector* grad);

/// Observation log-likelihood log p(y | x0) per column (soft constraints only).
Vector observation_log_likelihood(const Observation& obs, const Matrix& X0);

TrainResult finetune_control(const EpsModel& frozen, EpsNet& f_net, const Observation& obs,
                             const NoiseSchedule& schedule, const ControlConfig& cfg);

// --- checkpoints -----------------------------------------------------------------------------

/// Writes magic, format version, layout, little-endian float64 parameters and a config echo.
/// The file is written to a temporary and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const EpsNet& net,
                     const std::string& config_echo);

struct LoadedCheckpoint {
  std::shared_ptr<EpsNet> net;
  std::string config_echo;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace doob
