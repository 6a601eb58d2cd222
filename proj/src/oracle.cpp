#include "doob/oracle.hpp"

#include <Eigen/QR>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "doob/special.hpp"

namespace doob {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------------------------
// Observation

Observation::Observation(OperatorKind kind, Matrix A, Vector y, double noise_std)
    : kind_(kind), A_(std::move(A)), y_(std::move(y)), noise_std_(noise_std) {
  if (!(noise_std_ >= 0.0) || !std::isfinite(noise_std_)) {
    throw ConfigError("observation noise_std must be finite and >= 0");
  }
  if (A_.rows() != y_.size()) throw ConfigError("observation: operator rows must match |y|");
  if (A_.rows() < 1) throw ConfigError("observation: at least one measurement required");
}

Observation Observation::mask(std::vector<bool> mask, Vector y, double noise_std) {
  std::vector<Index> observed;
  for (Index i = 0; i < static_cast<Index>(mask.size()); ++i) {
    if (mask[i]) observed.push_back(i);
  }
  if (static_cast<Index>(observed.size()) != y.size()) {
    throw ConfigError("observation: mask selects " + std::to_string(observed.size()) +
                      " coordinates but y has " + std::to_string(y.size()));
  }
  Matrix A = Matrix::Zero(static_cast<Index>(observed.size()), static_cast<Index>(mask.size()));
  for (Index r = 0; r < static_cast<Index>(observed.size()); ++r) A(r, observed[r]) = 1.0;
  Observation obs(OperatorKind::Mask, std::move(A), std::move(y), noise_std);
  obs.mask_ = std::move(mask);
  obs.observed_ = std::move(observed);
  return obs;
}

Observation Observation::matrix(Matrix A, Vector y, double noise_std) {
  return Observation(OperatorKind::Matrix, std::move(A), std::move(y), noise_std);
}

Vector Observation::mask_vector() const {
  if (kind_ != OperatorKind::Mask) throw ConfigError("observation operator is not a mask");
  Vector m = Vector::Zero(dim());
  for (Index i : observed_) m[i] = 1.0;
  return m;
}

Vector Observation::scattered_y() const {
  if (kind_ != OperatorKind::Mask) throw ConfigError("observation operator is not a mask");
  Vector v = Vector::Zero(dim());
  for (Index r = 0; r < static_cast<Index>(observed_.size()); ++r) v[observed_[r]] = y_[r];
  return v;
}

// ---------------------------------------------------------------------------------------------
// HTransform

HTransform::HTransform(HKind kind, GaussianMixture prior, double a, double b,
                       std::optional<Observation> obs)
    : kind_(kind), prior_(std::move(prior)), a_(a), b_(b), obs_(std::move(obs)) {}

HTransform HTransform::interval(GaussianMixture prior, double a, double b) {
  if (prior.dim() != 1) throw ConfigError("interval h-transform requires a 1-D prior");
  if (!(a < b)) throw ConfigError("interval h-transform requires a < b");
  return HTransform(HKind::Interval, std::move(prior), a, b, std::nullopt);
}

HTransform HTransform::linear_gaussian(GaussianMixture prior, Observation obs) {
  if (obs.dim() != prior.dim()) throw ConfigError("observation and prior dimensions differ");
  return HTransform(HKind::LinearGaussian, std::move(prior), -kInf, kInf, std::move(obs));
}

double HPoint::value() const { return std::exp(log_h); }

HBatch h_value_and_grad(const HTransform& h, const NoiseSchedule& schedule, int k,
                        const Matrix& X) {
  if (k < 1 || k > schedule.n_steps()) throw DomainError("h_value_and_grad: step out of range");
  const NoisedMixture nm(h.prior(), schedule.alpha_bar(k));
  const auto ev = nm.evaluate(X);
  const Index M = h.prior().n_components();
  const Index d = X.rows();
  const Index B = X.cols();

  // Per component: log of the event likelihood under that component's posterior, and the
  // gradient of that log-likelihood w.r.t. x.
  Matrix log_like(M, B);
  std::vector<Matrix> like_grad(M, Matrix(d, B));

  for (Index m = 0; m < M; ++m) {
    const Matrix mu = nm.posterior_mean(m, X);
    if (h.kind() == HKind::Interval) {
      const double sd = std::sqrt(nm.posterior_cov(m)(0, 0));
      const double gain = nm.gain(m)(0, 0);
      for (Index b = 0; b < B; ++b) {
        const double lo = (h.lower() - mu(0, b)) / sd;
        const double hi = (h.upper() - mu(0, b)) / sd;
        const double ld = special::log_Phi_diff(lo, hi);
        log_like(m, b) = ld;
        // d/dmu log(Phi(hi) - Phi(lo)) = (phi(lo) - phi(hi)) / (sd * Delta)
        const double plo = std::isfinite(lo) ? std::exp(special::log_phi(lo) - ld) : 0.0;
        const double phi = std::isfinite(hi) ? std::exp(special::log_phi(hi) - ld) : 0.0;
        like_grad[m](0, b) = gain * (plo - phi) / sd;
      }
    } else {
      const Observation& obs = h.observation();
      const Matrix& A = obs.op();
      Matrix G = A * nm.posterior_cov(m) * A.transpose();
      G.diagonal().array() += obs.noise_std() * obs.noise_std();
      Eigen::LLT<Matrix> llt(G);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("h: predictive covariance of the observation is singular");
      }
      const Matrix Lg = llt.matrixL();
      const double logdet = 2.0 * Lg.diagonal().array().log().sum();
      const Matrix resid = (-(A * mu)).colwise() + obs.y();
      const Matrix white = llt.matrixL().solve(resid);
      log_like.row(m) = (-0.5 * white.colwise().squaredNorm().array() - 0.5 * logdet -
                         A.rows() * special::kLogSqrt2Pi)
                            .matrix();
      like_grad[m] = nm.gain(m).transpose() * (A.transpose() * llt.solve(resid));
    }
  }

  HBatch out;
  Matrix joint(M, B);
  for (Index m = 0; m < M; ++m) {
    joint.row(m) = (ev.comp_log_density[m] - ev.log_density).transpose() + log_like.row(m);
  }
  out.log_h = log_sum_exp_cols(joint);
  out.grad_log_h = Matrix::Zero(d, B);
  out.underflow.assign(static_cast<std::size_t>(B), false);
  const double log_floor = std::log(kHUnderflow);
  for (Index b = 0; b < B; ++b) {
    out.underflow[static_cast<std::size_t>(b)] = !(out.log_h[b] >= log_floor);
  }
  for (Index m = 0; m < M; ++m) {
    const Vector wt = (joint.row(m).transpose() - out.log_h).array().exp().matrix();
    const Matrix term = (ev.comp_scores[m] - ev.score) + like_grad[m];
    out.grad_log_h += term * wt.asDiagonal();
  }
  return out;
}

HPoint h_value_and_grad(const HTransform& h, const NoiseSchedule& schedule, int k,
                        const Vector& x) {
  const HBatch b = h_value_and_grad(h, schedule, k, Matrix(x));
  return HPoint{b.log_h[0], b.grad_log_h.col(0), b.underflow[0]};
}

// ---------------------------------------------------------------------------------------------
// Scores

Matrix marginal_score(const GaussianMixture& prior, const NoiseSchedule& schedule, int k,
                      const Matrix& X) {
  if (k < 1 || k > schedule.n_steps()) throw DomainError("marginal_score: step out of range");
  return NoisedMixture(prior, schedule.alpha_bar(k)).evaluate(X).score;
}

Vector marginal_score(const GaussianMixture& prior, const NoiseSchedule& schedule, int k,
                      const Vector& x) {
  return marginal_score(prior, schedule, k, Matrix(x)).col(0);
}

Vector marginal_log_density(const GaussianMixture& prior, const NoiseSchedule& schedule, int k,
                            const Matrix& X) {
  return NoisedMixture(prior, schedule.alpha_bar(k)).evaluate(X).log_density;
}

Matrix AnalyticEpsModel::eps(const NoiseSchedule& schedule, int k, const Matrix& X,
                             const Condition&) const {
  return score_to_eps(schedule, k, marginal_score(prior_, schedule, k, X));
}

Matrix AnalyticEpsModel::eps_vjp(const NoiseSchedule& schedule, int k, const Matrix& X,
                                 const Condition&, const Matrix& V) const {
  // J_eps = -sqrt(1 - ab) H with H the (symmetric) Hessian of log p_k.
  const NoisedMixture nm(prior_, schedule.alpha_bar(k));
  const auto ev = nm.evaluate(X);
  return -schedule.sqrt_one_minus_alpha_bar(k) * nm.hessian_product(ev, V);
}

Matrix tweedie_denoise(const GaussianMixture& prior, const NoiseSchedule& schedule, int k,
                       const Matrix& X) {
  if (k == 0) return X;
  return tweedie_denoise(AnalyticEpsModel(prior), schedule, k, X);
}

// ---------------------------------------------------------------------------------------------
// Posterior

Matrix PosteriorOracle::noised_score(const NoiseSchedule& schedule, int k,
                                     const Matrix& X) const {
  return NoisedMixture(mixture_, schedule.alpha_bar(k)).evaluate(X).score;
}

void PosteriorOracle::write_grid_csv(const std::filesystem::path& path, Index coord, double lo,
                                     double hi, Index n_points) const {
  if (n_points < 2 || !(lo < hi)) throw ConfigError("grid needs n_points >= 2 and lo < hi");
  const GaussianMixture marg = mixture_.marginal({coord});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "x,density\n";
  char buf[64];
  for (Index i = 0; i < n_points; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_points - 1);
    double dens = 0.0;
    for (Index m = 0; m < marg.n_components(); ++m) {
      const double var = marg.cov(m)(0, 0);
      if (var <= 0.0) continue;  // point mass; no density
      const double z = (x - marg.mean(m)[0]) / std::sqrt(var);
      dens += marg.weights()[m] * std::exp(special::log_phi(z)) / std::sqrt(var);
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", x, dens);
    out << buf;
  }
}

PosteriorOracle true_posterior(const GaussianMixture& prior, const Observation& obs) {
  if (obs.dim() != prior.dim()) throw ConfigError("observation and prior dimensions differ");
  const Matrix& A = obs.op();
  const Index M = prior.n_components();
  const double var_y = obs.noise_std() * obs.noise_std();

  if (obs.is_hard()) {
    Eigen::ColPivHouseholderQR<Matrix> qr(A);
    if (qr.rank() < A.rows()) {
      throw ConfigError("hard constraint with a rank-deficient operator is unsupported");
    }
  }

  std::vector<Vector> means;
  std::vector<Matrix> covs;
  Vector log_w(M);
  for (Index m = 0; m < M; ++m) {
    const Vector& mu = prior.mean(m);
    const Matrix& S = prior.cov(m);
    Matrix G = A * S * A.transpose();
    G.diagonal().array() += var_y;
    Eigen::LLT<Matrix> llt(G);
    if (llt.info() != Eigen::Success) throw NumericalError("posterior: singular A S A^T");
    const Vector resid = obs.y() - A * mu;
    const Matrix gain = llt.solve(A * S).transpose();  // S A^T G^-1
    Vector post_mu = mu + gain * resid;
    Matrix post_cov = S - gain * A * S;
    post_cov = 0.5 * (post_cov + post_cov.transpose());
    if (obs.is_hard() && obs.kind() == OperatorKind::Mask) {
      for (Index r = 0; r < obs.n_obs(); ++r) {
        const Index i = obs.observed()[r];
        post_mu[i] = obs.y()[r];
        post_cov.row(i).setZero();
        post_cov.col(i).setZero();
      }
    }
    const Matrix Lg = llt.matrixL();
    const double logdet = 2.0 * Lg.diagonal().array().log().sum();
    const Vector white = llt.matrixL().solve(resid);
    log_w[m] = std::log(prior.weights()[m]) - 0.5 * white.squaredNorm() - 0.5 * logdet;
    means.push_back(std::move(post_mu));
    covs.push_back(std::move(post_cov));
  }
  const double lse = log_sum_exp_cols(log_w)[0];
  Vector w = (log_w.array() - lse).exp().matrix();
  w /= w.sum();
  return PosteriorOracle(GaussianMixture(std::move(w), std::move(means), std::move(covs), true));
}

TruncatedMoments truncated_moments(const GaussianMixture& prior, double a, double b) {
  if (prior.dim() != 1) throw ConfigError("truncated_moments requires a 1-D prior");
  if (!(a < b)) throw ConfigError("truncated_moments requires a < b");
  const Index M = prior.n_components();
  Vector mass(M), means(M), second(M);
  for (Index m = 0; m < M; ++m) {
    const double mu = prior.mean(m)[0];
    const double sd = std::sqrt(prior.cov(m)(0, 0));
    const double lo = (a - mu) / sd;
    const double hi = (b - mu) / sd;
    const double logz = special::log_Phi_diff(lo, hi);
    const double z = std::exp(logz);
    const double plo = std::isfinite(lo) ? std::exp(special::log_phi(lo) - logz) : 0.0;
    const double phi = std::isfinite(hi) ? std::exp(special::log_phi(hi) - logz) : 0.0;
    const double lplo = std::isfinite(lo) ? lo * plo : 0.0;
    const double hphi = std::isfinite(hi) ? hi * phi : 0.0;
    const double shift = plo - phi;
    means[m] = mu + sd * shift;
    const double var = sd * sd * (1.0 + lplo - hphi - shift * shift);
    second[m] = var + means[m] * means[m];
    mass[m] = prior.weights()[m] * z;
  }
  const double total = mass.sum();
  const Vector w = mass / total;
  const double mean = w.dot(means);
  return {mean, w.dot(second) - mean * mean, total};
}

Matrix sample_truncated(const GaussianMixture& prior, double a, double b, Index n, Rng& rng) {
  const auto tm = truncated_moments(prior, a, b);
  if (tm.mass < 1e-4) throw DomainError("interval carries too little prior mass for rejection");
  Matrix out(1, n);
  Index filled = 0;
  while (filled < n) {
    const double x = prior.sample_one(rng)[0];
    if (x > a && x < b) out(0, filled++) = x;
  }
  return out;
}

}  // namespace doob
