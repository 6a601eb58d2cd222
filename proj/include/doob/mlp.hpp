#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "doob/rng.hpp"

namespace doob {

/// Fully connected network with SiLU hidden activations and a linear output layer.
///
/// Parameters live in one flat vector; layer l stores W_l (out x in, column-major) followed
/// by b_l. Batches are column-major: one sample per column.
template <typename Scalar>
class Mlp {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  /// Saved activations of one forward pass, consumed by backward().
  struct Tape {
    std::vector<Mat> inputs;  ///< input to each layer
    std::vector<Mat> pre;     ///< pre-activation of each layer
  };

  explicit Mlp(std::vector<Eigen::Index> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw std::invalid_argument("Mlp needs at least two widths");
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      offsets_.push_back(total);
      total += widths_[l + 1] * widths_[l] + widths_[l + 1];
    }
    params_ = Vec::Zero(total);
  }

  const std::vector<Eigen::Index>& widths() const { return widths_; }
  std::size_t n_layers() const { return widths_.size() - 1; }
  Eigen::Index n_params() const { return params_.size(); }
  Eigen::Index input_dim() const { return widths_.front(); }
  Eigen::Index output_dim() const { return widths_.back(); }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  /// Scaled normal init, N(0, 1/fan_in); the output layer is multiplied by `output_scale`.
  void init(Rng& rng, Scalar output_scale = Scalar(1)) {
    for (std::size_t l = 0; l < n_layers(); ++l) {
      const Scalar scale = Scalar(1) / std::sqrt(Scalar(widths_[l])) *
                           (l + 1 == n_layers() ? output_scale : Scalar(1));
      auto W = weight(l);
      for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = scale * Scalar(rng.normal());
      bias(l).setZero();
    }
  }

  Mat forward(const Mat& X) const {
    Mat h = X;
    for (std::size_t l = 0; l < n_layers(); ++l) {
      Mat z = (weight(l) * h).colwise() + bias(l);
      h = l + 1 == n_layers() ? std::move(z) : silu(z);
    }
    return h;
  }

  Mat forward(const Mat& X, Tape& tape) const {
    tape.inputs.assign(n_layers(), Mat());
    tape.pre.assign(n_layers(), Mat());
    Mat h = X;
    for (std::size_t l = 0; l < n_layers(); ++l) {
      tape.inputs[l] = h;
      tape.pre[l] = (weight(l) * h).colwise() + bias(l);
      h = l + 1 == n_layers() ? tape.pre[l] : silu(tape.pre[l]);
    }
    return h;
  }

  /// Back-propagates dL/dY. Adds dL/dparams into `grad` when non-null and returns dL/dX.
  Mat backward(const Tape& tape, const Mat& dY, Vec* grad) const {
    Mat delta = dY;
    for (std::size_t l = n_layers(); l-- > 0;) {
      if (l + 1 != n_layers()) delta = delta.cwiseProduct(silu_grad(tape.pre[l]));
      if (grad) {
        Eigen::Map<Mat> gW(grad->data() + offsets_[l], widths_[l + 1], widths_[l]);
        Eigen::Map<Vec> gb(grad->data() + offsets_[l] + widths_[l + 1] * widths_[l],
                           widths_[l + 1]);
        gW.noalias() += delta * tape.inputs[l].transpose();
        gb += delta.rowwise().sum();
      }
      delta = weight(l).transpose() * delta;
    }
    return delta;
  }

  Eigen::Map<Mat> weight(std::size_t l) {
    return Eigen::Map<Mat>(params_.data() + offsets_[l], widths_[l + 1], widths_[l]);
  }
  Eigen::Map<const Mat> weight(std::size_t l) const {
    return Eigen::Map<const Mat>(params_.data() + offsets_[l], widths_[l + 1], widths_[l]);
  }
  Eigen::Map<Vec> bias(std::size_t l) {
    return Eigen::Map<Vec>(params_.data() + offsets_[l] + widths_[l + 1] * widths_[l],
                           widths_[l + 1]);
  }
  Eigen::Map<const Vec> bias(std::size_t l) const {
    return Eigen::Map<const Vec>(params_.data() + offsets_[l] + widths_[l + 1] * widths_[l],
                                 widths_[l + 1]);
  }

  static Mat silu(const Mat& z) {
    return z.unaryExpr([](Scalar v) { return v / (Scalar(1) + std::exp(-v)); });
  }
  static Mat silu_grad(const Mat& z) {
    return z.unaryExpr([](Scalar v) {
      const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-v));
      return s * (Scalar(1) + v * (Scalar(1) - s));
    });
  }

 private:
  std::vector<Eigen::Index> widths_;
  std::vector<Eigen::Index> offsets_;
  Vec params_;
};

}  // namespace doob
