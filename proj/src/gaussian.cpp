#include "doob/gaussian.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

#include "doob/special.hpp"

namespace doob {

Matrix psd_sqrt(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Vector log_sum_exp_cols(const Matrix& L) {
  Vector out(L.cols());
  for (Index b = 0; b < L.cols(); ++b) {
    const double mx = L.col(b).maxCoeff();
    if (!std::isfinite(mx)) {
      out[b] = mx;
      continue;
    }
    out[b] = mx + std::log((L.col(b).array() - mx).exp().sum());
  }
  return out;
}

GaussianMixture::GaussianMixture(Vector weights, std::vector<Vector> means,
                                 std::vector<Matrix> covs, bool allow_singular)
    : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covs)) {
  const Index m = weights_.size();
  if (m < 1) throw ConfigError("mixture needs at least one component");
  if (static_cast<Index>(means_.size()) != m || static_cast<Index>(covs_.size()) != m) {
    throw ConfigError("mixture weights, means and covariances differ in count");
  }
  if ((weights_.array() < 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-12) {
    throw ConfigError("mixture weights must be non-negative and sum to one");
  }
  const Index d = means_.front().size();
  if (d < 1) throw ConfigError("mixture dimension must be >= 1");
  for (Index i = 0; i < m; ++i) {
    if (means_[i].size() != d || covs_[i].rows() != d || covs_[i].cols() != d) {
      throw ConfigError("mixture components must share one dimension");
    }
    if (!covs_[i].isApprox(covs_[i].transpose(), 1e-12)) {
      throw ConfigError("mixture covariance must be symmetric");
    }
    Eigen::LLT<Matrix> llt(covs_[i]);
    if (llt.info() != Eigen::Success) {
      if (!allow_singular) throw ConfigError("prior covariance must be positive definite");
      degenerate_ = true;
    }
    sqrt_covs_.push_back(psd_sqrt(covs_[i]));
  }
}

GaussianMixture GaussianMixture::single(Vector mean, Matrix cov) {
  return GaussianMixture(Vector::Ones(1), {std::move(mean)}, {std::move(cov)});
}

GaussianMixture GaussianMixture::diagonal(Vector weights, std::vector<Vector> means,
                                          std::vector<Vector> variances) {
  std::vector<Matrix> covs;
  for (const auto& v : variances) {
    if ((v.array() <= 0.0).any()) throw ConfigError("component variances must be positive");
    covs.push_back(v.asDiagonal());
  }
  return GaussianMixture(std::move(weights), std::move(means), std::move(covs));
}

Vector GaussianMixture::mean() const {
  Vector mu = Vector::Zero(dim());
  for (Index m = 0; m < n_components(); ++m) mu += weights_[m] * means_[m];
  return mu;
}

Matrix GaussianMixture::covariance() const {
  const Vector mu = mean();
  Matrix cov = Matrix::Zero(dim(), dim());
  for (Index m = 0; m < n_components(); ++m) {
    const Vector dm = means_[m] - mu;
    cov += weights_[m] * (covs_[m] + dm * dm.transpose());
  }
  return cov;
}

Vector GaussianMixture::sample_one(Rng& rng, Index* component) const {
  Index m = 0;
  if (n_components() > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    m = n_components() - 1;
    for (Index i = 0; i < n_components(); ++i) {
      acc += weights_[i];
      if (u < acc) {
        m = i;
        break;
      }
    }
  }
  if (component) *component = m;
  return means_[m] + sqrt_covs_[m] * rng.normal_vector(dim());
}

Matrix GaussianMixture::sample(Index n, Rng& rng) const {
  Matrix out(dim(), n);
  for (Index i = 0; i < n; ++i) out.col(i) = sample_one(rng);
  return out;
}

Vector GaussianMixture::log_density(const Matrix& X) const {
  if (degenerate_) throw DomainError("log_density of a degenerate mixture is undefined");
  Matrix L(n_components(), X.cols());
  for (Index m = 0; m < n_components(); ++m) {
    Eigen::LLT<Matrix> llt(covs_[m]);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const Matrix diff = X.colwise() - means_[m];
    const Matrix white = llt.matrixL().solve(diff);
    L.row(m) = (-0.5 * white.colwise().squaredNorm().array() - 0.5 * logdet -
                dim() * special::kLogSqrt2Pi + std::log(weights_[m]))
                   .matrix();
  }
  return log_sum_exp_cols(L);
}

GaussianMixture GaussianMixture::marginal(const std::vector<Index>& coords) const {
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  const Index k = static_cast<Index>(coords.size());
  for (Index m = 0; m < n_components(); ++m) {
    Vector mu(k);
    Matrix c(k, k);
    for (Index i = 0; i < k; ++i) {
      mu[i] = means_[m][coords[i]];
      for (Index j = 0; j < k; ++j) c(i, j) = covs_[m](coords[i], coords[j]);
    }
    means.push_back(mu);
    covs.push_back(c);
  }
  return GaussianMixture(weights_, std::move(means), std::move(covs), true);
}

GaussianMixture GaussianMixture::noised(double alpha_bar) const {
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  const double s = std::sqrt(alpha_bar);
  for (Index m = 0; m < n_components(); ++m) {
    means.push_back(s * means_[m]);
    Matrix c = alpha_bar * covs_[m];
    c.diagonal().array() += 1.0 - alpha_bar;
    covs.push_back(c);
  }
  return GaussianMixture(weights_, std::move(means), std::move(covs), true);
}

NoisedMixture::NoisedMixture(const GaussianMixture& prior, double alpha_bar)
    : prior_(prior), alpha_bar_(alpha_bar), sqrt_ab_(std::sqrt(alpha_bar)) {
  for (Index m = 0; m < prior_.n_components(); ++m) {
    Matrix c = alpha_bar * prior_.cov(m);
    c.diagonal().array() += 1.0 - alpha_bar;
    Eigen::LLT<Matrix> llt(c);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("noised marginal covariance is not positive definite");
    }
    const Matrix Lc = llt.matrixL();
    marg_logdet_.push_back(2.0 * Lc.diagonal().array().log().sum());
    // K = sqrt(ab) Sigma C^-1; Sigma and C commute, so K is symmetric.
    Matrix gain = sqrt_ab_ * llt.solve(prior_.cov(m)).transpose();
    Matrix post = prior_.cov(m) - sqrt_ab_ * gain * prior_.cov(m);
    post = 0.5 * (post + post.transpose());
    gains_.push_back(std::move(gain));
    post_covs_.push_back(std::move(post));
    marg_llt_.push_back(std::move(llt));
  }
}

NoisedMixture::Evaluation NoisedMixture::evaluate(const Matrix& X) const {
  const Index M = prior_.n_components();
  const Index d = prior_.dim();
  Evaluation e;
  e.comp_scores.resize(M);
  e.comp_log_density.resize(M);
  Matrix L(M, X.cols());
  for (Index m = 0; m < M; ++m) {
    const Matrix diff = X.colwise() - sqrt_ab_ * prior_.mean(m);
    const Matrix white = marg_llt_[m].matrixL().solve(diff);
    e.comp_log_density[m] = (-0.5 * white.colwise().squaredNorm().array() -
                             0.5 * marg_logdet_[m] - d * special::kLogSqrt2Pi +
                             std::log(prior_.weights()[m]))
                                .matrix()
                                .transpose();
    L.row(m) = e.comp_log_density[m].transpose();
    e.comp_scores[m] = -marg_llt_[m].solve(diff);
  }
  e.log_density = log_sum_exp_cols(L);
  e.responsibilities = (L.rowwise() - e.log_density.transpose()).array().exp().matrix();
  e.score = Matrix::Zero(d, X.cols());
  for (Index m = 0; m < M; ++m) {
    e.score += e.comp_scores[m] * e.responsibilities.row(m).asDiagonal();
  }
  return e;
}

Matrix NoisedMixture::posterior_mean(Index m, const Matrix& X) const {
  const Matrix diff = X.colwise() - sqrt_ab_ * prior_.mean(m);
  return (gains_[m] * diff).colwise() + prior_.mean(m);
}

Matrix NoisedMixture::hessian_product(const Evaluation& e, const Matrix& V) const {
  // H = sum_m r_m (-C_m^-1 + s_m s_m^T) - s s^T
  const Index M = prior_.n_components();
  Matrix out = Matrix::Zero(V.rows(), V.cols());
  for (Index m = 0; m < M; ++m) {
    const auto& s = e.comp_scores[m];
    const Vector proj = (s.array() * V.array()).colwise().sum().transpose();
    Matrix term = -marg_llt_[m].solve(V) + s * proj.asDiagonal();
    out += term * e.responsibilities.row(m).asDiagonal();
  }
  const Vector proj = (e.score.array() * V.array()).colwise().sum().transpose();
  out -= e.score * proj.asDiagonal();
  return out;
}

}  // namespace doob
