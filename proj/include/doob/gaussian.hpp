#pragma once

#include <Eigen/Cholesky>

#include <vector>

#include "doob/rng.hpp"
#include "doob/types.hpp"

namespace doob {

/// Finite mixture of multivariate Gaussians with full covariances.
///
/// Priors require positive-definite covariances. Posteriors under hard constraints are
/// degenerate along the observed coordinates, so `allow_singular` admits PSD covariances;
/// those mixtures support sampling and moments but not `log_density`.
class GaussianMixture {
 public:
  GaussianMixture(Vector weights, std::vector<Vector> means, std::vector<Matrix> covs,
                  bool allow_singular = false);

  static GaussianMixture single(Vector mean, Matrix cov);
  static GaussianMixture diagonal(Vector weights, std::vector<Vector> means,
                                  std::vector<Vector> variances);

  Index dim() const { return means_.front().size(); }
  Index n_components() const { return weights_.size(); }
  const Vector& weights() const { return weights_; }
  const Vector& mean(Index m) const { return means_[m]; }
  const Matrix& cov(Index m) const { return covs_[m]; }
  bool is_degenerate() const { return degenerate_; }

  Vector mean() const;
  Matrix covariance() const;

  /// d x n matrix of draws.
  Matrix sample(Index n, Rng& rng) const;
  /// Draw a single point and report which component produced it.
  Vector sample_one(Rng& rng, Index* component = nullptr) const;

  /// log p(x) for each column of X.
  Vector log_density(const Matrix& X) const;

  /// Marginal over a subset of coordinates.
  GaussianMixture marginal(const std::vector<Index>& coords) const;

  /// Law of sqrt(alpha_bar) X + sqrt(1 - alpha_bar) eps.
  GaussianMixture noised(double alpha_bar) const;

 private:
  Vector weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covs_;
  std::vector<Matrix> sqrt_covs_;
  bool degenerate_ = false;
};

/// A Gaussian mixture prior pushed through the forward kernel to a fixed alpha_bar, with
/// the per-component Gaussian posteriors p(x0 | x) precomputed.
///
/// Marginal component m:  N(sqrt(ab) m_m, C_m),   C_m = ab Sigma_m + (1 - ab) I
/// Posterior component m: N(m_m + K_m (x - sqrt(ab) m_m), S_m),  K_m = sqrt(ab) Sigma_m C_m^-1
class NoisedMixture {
 public:
  NoisedMixture(const GaussianMixture& prior, double alpha_bar);

  struct Evaluation {
    Vector log_density;                ///< log p(x) per column
    Matrix responsibilities;           ///< M x B, columns sum to one
    std::vector<Matrix> comp_scores;   ///< per component, d x B: -C_m^-1 (x - sqrt(ab) m_m)
    std::vector<Vector> comp_log_density;  ///< per component, log w_m + log N_m(x)
    Matrix score;                      ///< d x B, responsibility-weighted component scores
  };

  Evaluation evaluate(const Matrix& X) const;

  Matrix posterior_mean(Index m, const Matrix& X) const;
  const Matrix& posterior_cov(Index m) const { return post_covs_[m]; }
  const Matrix& gain(Index m) const { return gains_[m]; }

  /// Hessian of log p applied to each column of V, evaluated at the matching column of X.
  Matrix hessian_product(const Evaluation& eval, const Matrix& V) const;

  const GaussianMixture& prior() const { return prior_; }
  double alpha_bar() const { return alpha_bar_; }
  Index dim() const { return prior_.dim(); }

 private:
  GaussianMixture prior_;
  double alpha_bar_;
  double sqrt_ab_;
  std::vector<Eigen::LLT<Matrix>> marg_llt_;
  std::vector<double> marg_logdet_;
  std::vector<Matrix> gains_;
  std::vector<Matrix> post_covs_;
};

/// Column-wise log-sum-exp of an M x B matrix.
Vector log_sum_exp_cols(const Matrix& L);

/// Symmetric square root factor L with L L^T = cov, valid for PSD input.
Matrix psd_sqrt(const Matrix& cov);

}  // namespace doob
