#include "doob/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "doob/io.hpp"
#include "doob/special.hpp"

namespace doob {

double wasserstein1_1d(const Vector& a, const Vector& b) {
  if (a.size() == 0 || b.size() == 0) throw DomainError("wasserstein1_1d needs nonempty samples");
  std::vector<double> sa(a.data(), a.data() + a.size());
  std::vector<double> sb(b.data(), b.data() + b.size());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa.size() == sb.size()) {
    double total = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) total += std::abs(sa[i] - sb[i]);
    return total / static_cast<double>(sa.size());
  }
  std::vector<double> merged;
  merged.reserve(sa.size() + sb.size());
  std::merge(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(merged));
  const auto na = static_cast<double>(sa.size());
  const auto nb = static_cast<double>(sb.size());
  double total = 0.0;
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i + 1 < merged.size(); ++i) {
    const double x = merged[i];
    while (ia < sa.size() && sa[ia] <= x) ++ia;
    while (ib < sb.size() && sb[ib] <= x) ++ib;
    total += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) *
             (merged[i + 1] - x);
  }
  return total;
}

double sliced_w1(const Matrix& a, const Matrix& b, const Matrix& directions) {
  if (a.cols() != b.cols() || directions.rows() != a.cols()) {
    throw DomainError("sliced_w1 needs samples and directions of matching dimension");
  }
  if (directions.cols() == 0) throw DomainError("sliced_w1 needs at least one projection");
  double total = 0.0;
  for (Index p = 0; p < directions.cols(); ++p) {
    total += wasserstein1_1d(a * directions.col(p), b * directions.col(p));
  }
  return total / static_cast<double>(directions.cols());
}

double sliced_w1(const Matrix& a, const Matrix& b, int n_projections, Rng& rng) {
  if (n_projections < 1) throw DomainError("sliced_w1 needs at least one projection");
  Matrix dirs(a.cols(), n_projections);
  for (int p = 0; p < n_projections; ++p) {
    Vector u;
    do {
      u = rng.normal_vector(a.cols());
    } while (u.norm() == 0.0);
    dirs.col(p) = u.normalized();
  }
  return sliced_w1(a, b, dirs);
}

ConstraintResidual constraint_residual(const Observation& obs, const Matrix& samples,
                                       double tau) {
  if (samples.cols() != obs.dim()) throw DomainError("sample dimension does not match observation");
  if (samples.rows() == 0) return {};
  const Matrix r = (obs.op() * samples.transpose()).colwise() - obs.y();
  const Vector per = (r.colwise().squaredNorm() / static_cast<double>(obs.n_obs())).transpose();
  Index inliers = 0;
  for (Index i = 0; i < per.size(); ++i) inliers += std::sqrt(per[i]) < tau ? 1 : 0;
  return {std::sqrt(per.mean()),
          static_cast<double>(inliers) / static_cast<double>(per.size())};
}

QuadraturePosterior quadrature_posterior_1d(const GaussianMixture& prior,
                                            const std::variant<Observation, IntervalEvent>& event,
                                            double lo, double hi, Index n_points) {
  if (prior.dim() != 1) throw ConfigError("quadrature_posterior_1d needs a 1-D prior");
  if (n_points < 1000) throw ConfigError("quadrature_posterior_1d needs at least 1000 points");
  if (!(lo < hi)) throw ConfigError("quadrature grid needs lo < hi");

  const Observation* obs = std::get_if<Observation>(&event);
  double glo = lo, ghi = hi;
  double sup_like = 1.0;
  if (obs) {
    if (obs->dim() != 1 || obs->n_obs() != 1 || obs->is_hard()) {
      throw ConfigError("quadrature_posterior_1d needs a soft scalar observation");
    }
    sup_like = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * obs->noise_std());
  } else {
    const auto& iv = std::get<IntervalEvent>(event);
    glo = std::max(lo, iv.a);
    ghi = std::min(hi, iv.b);
    if (!(glo < ghi)) throw ConfigError("quadrature grid does not meet the interval");
  }

  QuadraturePosterior q;
  q.grid = Vector::LinSpaced(n_points, glo, ghi);
  const Vector log_prior = prior.log_density(q.grid.transpose());
  Vector log_u = log_prior;
  if (obs) {
    const double s = obs->noise_std();
    const double a = obs->op()(0, 0);
    for (Index i = 0; i < n_points; ++i) {
      const double r = (obs->y()[0] - a * q.grid[i]) / s;
      log_u[i] += -0.5 * r * r - std::log(s) - special::kLogSqrt2Pi;
    }
  }
  const double shift = log_u.maxCoeff();
  Vector u = (log_u.array() - shift).exp().matrix();
  const double h = (ghi - glo) / static_cast<double>(n_points - 1);
  auto trapz = [&](const Vector& f) {
    return h * (f.sum() - 0.5 * (f[0] + f[n_points - 1]));
  };
  const double z = trapz(u);
  q.density = u / z;
  q.mean = trapz(q.density.cwiseProduct(q.grid));
  const Vector centred = (q.grid.array() - q.mean).matrix();
  q.variance = trapz(q.density.cwiseProduct(centred.cwiseAbs2()));

  // Prior mass of the event region lying outside the grid bounds the missing posterior mass.
  double outside = 0.0;
  const double ev_lo = obs ? -std::numeric_limits<double>::infinity()
                           : std::get<IntervalEvent>(event).a;
  const double ev_hi = obs ? std::numeric_limits<double>::infinity()
                           : std::get<IntervalEvent>(event).b;
  for (Index m = 0; m < prior.n_components(); ++m) {
    const double mu = prior.mean(m)[0];
    const double sd = std::sqrt(prior.cov(m)(0, 0));
    if (ev_lo < glo) {
      outside += prior.weights()[m] *
                 std::exp(special::log_Phi_diff((ev_lo - mu) / sd, (glo - mu) / sd));
    }
    if (ghi < ev_hi) {
      outside += prior.weights()[m] *
                 std::exp(special::log_Phi_diff((ghi - mu) / sd, (ev_hi - mu) / sd));
    }
  }
  const double evidence = z * std::exp(shift);
  q.tail_warning = outside * sup_like > 1e-4 * evidence;
  return q;
}

Matrix finite_rows(const Matrix& samples) {
  std::vector<Index> keep;
  for (Index i = 0; i < samples.rows(); ++i)
    if (samples.row(i).allFinite()) keep.push_back(i);
  return samples(keep, Eigen::all);
}

Vector sample_mean(const Matrix& samples) { return samples.colwise().mean().transpose(); }

Matrix sample_covariance(const Matrix& samples) {
  const Matrix c = samples.rowwise() - samples.colwise().mean();
  return c.transpose() * c / static_cast<double>(std::max<Index>(samples.rows() - 1, 1));
}

MetricReport compare_samples(const Matrix& samples, const Matrix& reference,
                             const std::vector<Index>& unobserved,
                             const std::optional<Observation>& obs, Rng& rng, int n_projections,
                             double tau) {
  if (samples.cols() != reference.cols()) throw DomainError("sample dimension mismatch");
  if (samples.rows() == 0 || reference.rows() == 0) throw DomainError("no samples to compare");
  if (!samples.allFinite() || !reference.allFinite()) {
    throw DomainError("compare_samples needs finite samples");
  }
  const Index d = samples.cols();
  MetricReport r;
  r.n_samples = samples.rows();
  r.n_reference = reference.rows();
  r.w1_per_dim.resize(d);
  for (Index j = 0; j < d; ++j) r.w1_per_dim[j] = wasserstein1_1d(samples.col(j), reference.col(j));
  if (unobserved.empty()) {
    r.w1_unobserved = r.w1_per_dim.mean();
  } else {
    double s = 0.0;
    for (Index j : unobserved) s += r.w1_per_dim[j];
    r.w1_unobserved = s / static_cast<double>(unobserved.size());
  }
  r.sliced_w1 = d == 1 ? r.w1_per_dim[0] : sliced_w1(samples, reference, n_projections, rng);
  r.mean_err = (sample_mean(samples) - sample_mean(reference)).norm();
  r.cov_err = (sample_covariance(samples) - sample_covariance(reference)).norm();
  if (obs) {
    const auto c = constraint_residual(*obs, samples, tau);
    r.constraint_rmse = c.rmse;
    r.inlier_fraction = c.inlier_fraction;
  }
  return r;
}

std::string metric_csv_header(Index dim) {
  std::string h;
  for (Index j = 0; j < dim; ++j) h += "w1_x" + std::to_string(j) + ",";
  return h +
         "w1_unobserved,sliced_w1,mean_err,cov_err,constraint_rmse,inlier_fraction,n_samples,"
         "n_reference";
}

std::string metric_csv_row(const MetricReport& r) {
  std::string row;
  for (Index j = 0; j < r.w1_per_dim.size(); ++j) row += format_double(r.w1_per_dim[j]) + ",";
  row += format_double(r.w1_unobserved) + "," + format_double(r.sliced_w1) + "," +
         format_double(r.mean_err) + "," + format_double(r.cov_err) + "," +
         format_double(r.constraint_rmse) + "," + format_double(r.inlier_fraction) + "," +
         std::to_string(r.n_samples) + "," + std::to_string(r.n_reference);
  return row;
}

std::string metric_summary(const MetricReport& r) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(5);
  out << "metric             value\n";
  for (Index j = 0; j < r.w1_per_dim.size(); ++j) {
    std::string name = "w1[x" + std::to_string(j) + "]";
    name.resize(19, ' ');
    out << name << r.w1_per_dim[j] << "\n";
  }
  out << "w1 (unobserved)    " << r.w1_unobserved << "\n"
      << "sliced w1          " << r.sliced_w1 << "\n"
      << "mean error         " << r.mean_err << "\n"
      << "covariance error   " << r.cov_err << "\n"
      << "constraint rmse    " << r.constraint_rmse << "\n"
      << "inlier fraction    " << r.inlier_fraction << "\n"
      << "samples            " << r.n_samples << " (reference " << r.n_reference << ")\n";
  return out.str();
}

}  // namespace doob
