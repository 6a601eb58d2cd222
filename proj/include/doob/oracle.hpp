#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <vector>

#include "doob/gaussian.hpp"
#include "doob/model.hpp"
#include "doob/schedule.hpp"

namespace doob {

enum class OperatorKind { Mask, Matrix };

/// Linear measurement y = A x0 + noise_std * eta. noise_std == 0 is the hard constraint
/// A x0 = y. A is either a coordinate mask or a general n x d matrix.
class Observation {
 public:
  static Observation mask(std::vector<bool> mask, Vector y, double noise_std);
  static Observation matrix(Matrix A, Vector y, double noise_std);

  OperatorKind kind() const { return kind_; }
  Index dim() const { return A_.cols(); }
  Index n_obs() const { return A_.rows(); }
  const Vector& y() const { return y_; }
  double noise_std() const { return noise_std_; }
  bool is_hard() const { return noise_std_ == 0.0; }

  /// n x d operator matrix (a row selection for masks).
  const Matrix& op() const { return A_; }
  /// Observed coordinate indices; Mask operators only.
  const std::vector<Index>& observed() const { return observed_; }
  const std::vector<bool>& mask() const { return mask_; }
  /// Mask as a 0/1 vector of length d; Mask operators only.
  Vector mask_vector() const;
  /// y scattered into a length-d vector (zero off the mask); Mask operators only.
  Vector scattered_y() const;

  Matrix apply(const Matrix& X) const { return A_ * X; }

 private:
  Observation(OperatorKind kind, Matrix A, Vector y, double noise_std);

  OperatorKind kind_;
  Matrix A_;
  Vector y_;
  double noise_std_;
  std::vector<bool> mask_;
  std::vector<Index> observed_;
};

enum class HKind { Interval, LinearGaussian };

/// Doob h-function h(k, x) = P(event | X_k = x) for a Gaussian-mixture prior.
///
/// Interval:       event X0 in (a, b), 1-D priors, either bound may be infinite.
/// LinearGaussian: h = p(y | X_k = x) under the observation's likelihood; with
///                 noise_std == 0 this is the density of the hard constraint A X0 = y.
class HTransform {
 public:
  static HTransform interval(GaussianMixture prior, double a, double b);
  static HTransform linear_gaussian(GaussianMixture prior, Observation obs);

  HKind kind() const { return kind_; }
  const GaussianMixture& prior() const { return prior_; }
  double lower() const { return a_; }
  double upper() const { return b_; }
  const Observation& observation() const { return *obs_; }

 private:
  HTransform(HKind kind, GaussianMixture prior, double a, double b,
             std::optional<Observation> obs);

  HKind kind_;
  GaussianMixture prior_;
  double a_ = -std::numeric_limits<double>::infinity();
  double b_ = std::numeric_limits<double>::infinity();
  std::optional<Observation> obs_;
};

/// log h and grad log h for a batch of points.
struct HBatch {
  Vector log_h;
  Matrix grad_log_h;
  /// h itself fell below 1e-300; callers must work with log_h / grad_log_h only.
  std::vector<bool> underflow;
};

struct HPoint {
  double log_h = 0.0;
  Vector grad_log_h;
  bool underflow = false;
  double value() const;
};

inline constexpr double kHUnderflow = 1e-300;

HBatch h_value_and_grad(const HTransform& h, const NoiseSchedule& schedule, int k,
                        const Matrix& X);
HPoint h_value_and_grad(const HTransform& h, const NoiseSchedule& schedule, int k,
                        const Vector& x);

/// grad_x log p_k(x) for the prior pushed through the forward kernel to step k.
Matrix marginal_score(const GaussianMixture& prior, const NoiseSchedule& schedule, int k,
                      const Matrix& X);
Vector marginal_score(const GaussianMixture& prior, const NoiseSchedule& schedule, int k,
                      const Vector& x);

/// log p_k(x), same setting as marginal_score.
Vector marginal_log_density(const GaussianMixture& prior, const NoiseSchedule& schedule, int k,
                            const Matrix& X);

/// Exact noise predictor eps = -sqrt(1 - ab_k) grad log p_k of a Gaussian-mixture prior.
class AnalyticEpsModel final : public EpsModel {
 public:
  explicit AnalyticEpsModel(GaussianMixture prior) : prior_(std::move(prior)) {}

  Index dim() const override { return prior_.dim(); }
  ModelCaps caps() const override { return {}; }
  std::string describe() const override { return "analytic"; }
  Matrix eps(const NoiseSchedule& schedule, int k, const Matrix& X,
             const Condition& cond) const override;
  Matrix eps_vjp(const NoiseSchedule& schedule, int k, const Matrix& X, const Condition& cond,
                 const Matrix& V) const override;

  const GaussianMixture& prior() const { return prior_; }

 private:
  GaussianMixture prior_;
};

/// Tweedie estimate from the exact prior score.
Matrix tweedie_denoise(const GaussianMixture& prior, const NoiseSchedule& schedule, int k,
                       const Matrix& X);

/// Ground-truth posterior p(x0 | observation) of a Gaussian-mixture prior.
class PosteriorOracle {
 public:
  explicit PosteriorOracle(GaussianMixture posterior) : mixture_(std::move(posterior)) {}

  const GaussianMixture& mixture() const { return mixture_; }
  Matrix sample(Index n, Rng& rng) const { return mixture_.sample(n, rng); }
  Vector mean() const { return mixture_.mean(); }
  Matrix covariance() const { return mixture_.covariance(); }
  /// Density of the full posterior; throws for hard-constraint (degenerate) posteriors.
  Vector log_density(const Matrix& X) const { return mixture_.log_density(X); }

  /// grad log of the posterior pushed through the forward kernel to step k (k >= 1).
  Matrix noised_score(const NoiseSchedule& schedule, int k, const Matrix& X) const;

  /// Writes the 1-D marginal density of `coord` on a uniform grid as CSV (x,density).
  void write_grid_csv(const std::filesystem::path& path, Index coord, double lo, double hi,
                      Index n_points) const;

 private:
  GaussianMixture mixture_;
};

/// Conditions each mixture component on the observation and reweights components by their
/// marginal likelihood of y. Hard constraints need a full-row-rank operator.
PosteriorOracle true_posterior(const GaussianMixture& prior, const Observation& obs);

struct TruncatedMoments {
  double mean;
  double variance;
  double mass;  ///< prior probability of the interval
};

/// Moments of a 1-D Gaussian mixture restricted to (a, b).
TruncatedMoments truncated_moments(const GaussianMixture& prior, double a, double b);

/// Exact draws from a 1-D Gaussian mixture restricted to (a, b) by rejection; returns 1 x n.
/// Throws DomainError when the interval carries less than 1e-4 prior mass.
Matrix sample_truncated(const GaussianMixture& prior, double a, double b, Index n, Rng& rng);

}  // namespace doob
