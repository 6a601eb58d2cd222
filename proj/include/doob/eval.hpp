#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "doob/oracle.hpp"

namespace doob {

/// Wasserstein-1 distance between two empirical 1-D distributions.
///
/// Equal sizes use the sorted quantile coupling; otherwise the integral of |F_a - F_b| over
/// the merged support. Throws DomainError on empty input.
double wasserstein1_1d(const Vector& a, const Vector& b);

/// Mean 1-D W1 of the projections onto `n_projections` uniform random unit vectors.
/// Rows of `a` and `b` are samples.
double sliced_w1(const Matrix& a, const Matrix& b, int n_projections, Rng& rng);

/// Mean 1-D W1 over the given unit directions (columns of `directions`).
double sliced_w1(const Matrix& a, const Matrix& b, const Matrix& directions);

struct ConstraintResidual {
  double rmse = 0.0;            ///< sqrt(mean over samples of ||A x - y||^2 / n)
  double inlier_fraction = 1.0; ///< share of samples whose own RMSE is below tau
};

inline constexpr double kDefaultInlierTau = 0.1;

/// Rows of `samples` are samples.
ConstraintResidual constraint_residual(const Observation& obs, const Matrix& samples,
                                       double tau = kDefaultInlierTau);

struct IntervalEvent {
  double a;
  double b;
};

/// Trapezoid-rule posterior of a 1-D prior on a uniform grid.
struct QuadraturePosterior {
  Vector grid;
  Vector density;  ///< normalised so that the trapezoid integral is one
  double mean = 0.0;
  double variance = 0.0;
  /// Upper bound on posterior mass outside the grid exceeded 1e-4.
  bool tail_warning = false;
};

/// Posterior of a 1-D Gaussian-mixture prior under a soft 1-D observation or an interval
/// event. For an interval the grid is clipped to the interval so that the jump of the
/// indicator sits on a grid endpoint. Needs n_points >= 1000.
QuadraturePosterior quadrature_posterior_1d(const GaussianMixture& prior,
                                            const std::variant<Observation, IntervalEvent>& event,
                                            double lo, double hi, Index n_points);

/// Comparison of generated samples against reference draws from the exact posterior.
struct MetricReport {
  Vector w1_per_dim;
  double w1_unobserved = 0.0;  ///< mean of w1_per_dim over the unobserved coordinates
  double sliced_w1 = 0.0;
  double mean_err = 0.0;  ///< Euclidean norm of the mean difference
  double cov_err = 0.0;   ///< Frobenius norm of the covariance difference
  double constraint_rmse = 0.0;
  double inlier_fraction = 1.0;
  Index n_samples = 0;
  Index n_reference = 0;
  std::vector<std::uint64_t> seeds;
};

/// `unobserved` selects the coordinates behind w1_unobserved (all coordinates when empty).
/// Both sample sets must be finite; filter aborted chains with finite_rows first.
MetricReport compare_samples(const Matrix& samples, const Matrix& reference,
                             const std::vector<Index>& unobserved,
                             const std::optional<Observation>& obs, Rng& rng,
                             int n_projections = 200, double tau = kDefaultInlierTau);

std::string metric_csv_header(Index dim);
std::string metric_csv_row(const MetricReport& report);
std::string metric_summary(const MetricReport& report);

/// Rows of `samples` with all entries finite (aborted chains removed).
Matrix finite_rows(const Matrix& samples);

/// Sample mean and covariance of rows.
Vector sample_mean(const Matrix& samples);
Matrix sample_covariance(const Matrix& samples);

}  // namespace doob
