#include "doob/nets.hpp"

#include <cmath>

namespace doob {

std::string to_string(NetMode mode) {
  switch (mode) {
    case NetMode::Unconditional: return "unconditional";
    case NetMode::Amortised: return "amortised";
    case NetMode::ClassifierFree: return "classifier_free";
    case NetMode::RfDiff: return "rfdiff";
  }
  return "unconditional";
}

NetMode net_mode_from_string(const std::string& name) {
  if (name == "unconditional") return NetMode::Unconditional;
  if (name == "amortised") return NetMode::Amortised;
  if (name == "classifier_free") return NetMode::ClassifierFree;
  if (name == "rfdiff") return NetMode::RfDiff;
  throw ConfigError("unknown network mode '" + name + "'");
}

void time_features(double t, Eigen::Ref<Vector> out) {
  for (int j = 0; j < kTimeFrequencies; ++j) {
    const double w = std::ldexp(1.0, j);  // 1, 2, 4, ..., 128
    out[2 * j] = std::sin(w * t);
    out[2 * j + 1] = std::cos(w * t);
  }
}

namespace {
std::vector<Index> widths_for(const NetLayout& layout, Index input_dim) {
  std::vector<Index> w{input_dim};
  for (Index h : layout.hidden) {
    if (h < 1) throw ConfigError("hidden widths must be positive");
    w.push_back(h);
  }
  w.push_back(layout.dim);
  return w;
}

Index channels_of(const NetLayout& layout) {
  switch (layout.mode) {
    case NetMode::Unconditional: return 0;
    case NetMode::Amortised: return 2 * layout.dim;
    case NetMode::ClassifierFree: return layout.aux_dim + 1;
    case NetMode::RfDiff: return 2 * layout.dim;
  }
  return 0;
}
}  // namespace

EpsNet::EpsNet(NetLayout layout, std::uint64_t init_seed, double output_scale)
    : layout_(std::move(layout)),
      mlp_(widths_for(layout_, layout_.dim + kTimeFeatures + channels_of(layout_))) {
  if (layout_.dim < 1) throw ConfigError("network dimension must be >= 1");
  if (layout_.mode == NetMode::ClassifierFree && layout_.aux_dim < 1) {
    throw ConfigError("classifier-free network needs aux_dim >= 1");
  }
  Rng rng(init_seed, 0xC0FFEE);
  mlp_.init(rng, output_scale);
}

Index EpsNet::condition_channels() const { return channels_of(layout_); }

ModelCaps EpsNet::caps() const {
  switch (layout_.mode) {
    case NetMode::Unconditional: return {ConditionKind::None, false};
    case NetMode::Amortised: return {ConditionKind::Masked, false};
    case NetMode::ClassifierFree: return {ConditionKind::Aux, false};
    case NetMode::RfDiff: return {ConditionKind::Masked, true};
  }
  return {};
}

Matrix EpsNet::encode(const Matrix& X, const Vector& t, const Matrix& channels) const {
  const Index d = layout_.dim;
  const Index B = X.cols();
  Matrix in(input_dim(), B);
  in.topRows(d) = X;
  for (Index b = 0; b < B; ++b) time_features(t[b], in.col(b).segment(d, kTimeFeatures));
  if (condition_channels() > 0) in.bottomRows(condition_channels()) = channels;
  return in;
}

Vector EpsNet::channels_for(const Condition& cond, double t, int n_steps) const {
  const Index d = layout_.dim;
  Vector c(condition_channels());
  switch (layout_.mode) {
    case NetMode::Unconditional: break;
    case NetMode::Amortised: {
      if (cond.kind == ConditionKind::Masked) {
        for (Index i = 0; i < d; ++i) {
          c[i] = cond.mask[i] > 0.5 ? cond.values[i] : kMaskPad;
          c[d + i] = cond.mask[i] > 0.5 ? 1.0 : 0.0;
        }
      } else {
        c.head(d).setConstant(kMaskPad);
        c.tail(d).setZero();
      }
      break;
    }
    case NetMode::ClassifierFree: {
      if (cond.kind == ConditionKind::Aux) {
        if (cond.values.size() != layout_.aux_dim) throw ConfigError("aux condition size mismatch");
        c.head(layout_.aux_dim) = cond.values;
        c[layout_.aux_dim] = 1.0;
      } else {
        c.setZero();
      }
      break;
    }
    case NetMode::RfDiff: {
      for (Index i = 0; i < d; ++i) {
        const bool has_time = cond.coord_time.size() == d;
        c[i] = has_time ? cond.coord_time[i] / n_steps : t;
        c[d + i] = cond.kind == ConditionKind::Masked && cond.mask[i] > 0.5 ? 1.0 : 0.0;
      }
      break;
    }
  }
  return c;
}

std::string NetEpsModel::describe() const {
  std::string s = "mlp(" + to_string(net_->layout().mode) + ";";
  for (Index w : net_->mlp().widths()) s += " " + std::to_string(w);
  return s + ")";
}

Matrix NetEpsModel::input_for(const NoiseSchedule& schedule, int k, const Matrix& X,
                              const Condition& cond) const {
  const int N = schedule.n_steps();
  const double t = static_cast<double>(k) / N;
  const Vector ch = net_->channels_for(cond, t, N);
  return net_->encode(X, Vector::Constant(X.cols(), t), ch.replicate(1, X.cols()));
}

Matrix NetEpsModel::eps(const NoiseSchedule& schedule, int k, const Matrix& X,
                        const Condition& cond) const {
  return net_->predict(input_for(schedule, k, X, cond));
}

Matrix NetEpsModel::eps_vjp(const NoiseSchedule& schedule, int k, const Matrix& X,
                            const Condition& cond, const Matrix& V) const {
  Mlp<double>::Tape tape;
  net_->mlp().forward(input_for(schedule, k, X, cond), tape);
  return net_->mlp().backward(tape, V, nullptr).topRows(net_->dim());
}

Matrix NetEpsModel::eps_mixed(const NoiseSchedule& schedule, const std::vector<int>& steps,
                              const Matrix& X, const Condition& cond) const {
  const int N = schedule.n_steps();
  Vector t(X.cols());
  Matrix ch(net_->condition_channels(), X.cols());
  for (Index b = 0; b < X.cols(); ++b) {
    t[b] = static_cast<double>(steps[static_cast<std::size_t>(b)]) / N;
    ch.col(b) = net_->channels_for(cond, t[b], N);
  }
  return net_->predict(net_->encode(X, t, ch));
}

}  // namespace doob
