#include "doob/model.hpp"

#include <cmath>
#include <map>

namespace doob {

Condition Condition::aux(Vector y) {
  Condition c;
  c.kind = ConditionKind::Aux;
  c.values = std::move(y);
  return c;
}

Condition Condition::masked(Vector values, Vector mask) {
  if (values.size() != mask.size()) throw ConfigError("masked condition: size mismatch");
  Condition c;
  c.kind = ConditionKind::Masked;
  c.values = std::move(values);
  c.mask = std::move(mask);
  return c;
}

Matrix EpsModel::eps_mixed(const NoiseSchedule& schedule, const std::vector<int>& steps,
                           const Matrix& X, const Condition& cond) const {
  std::map<int, std::vector<Index>> groups;
  for (Index b = 0; b < X.cols(); ++b) groups[steps[b]].push_back(b);
  Matrix out(dim(), X.cols());
  for (const auto& [k, cols] : groups) {
    Matrix sub(X.rows(), static_cast<Index>(cols.size()));
    for (Index i = 0; i < sub.cols(); ++i) sub.col(i) = X.col(cols[i]);
    const Matrix e = eps(schedule, k, sub, cond);
    for (Index i = 0; i < sub.cols(); ++i) out.col(cols[i]) = e.col(i);
  }
  return out;
}

Matrix eps_to_score(const NoiseSchedule& schedule, int k, const Matrix& eps) {
  return -eps / schedule.sqrt_one_minus_alpha_bar(k);
}

Matrix score_to_eps(const NoiseSchedule& schedule, int k, const Matrix& score) {
  return -schedule.sqrt_one_minus_alpha_bar(k) * score;
}

namespace {
double checked_sqrt_ab(const NoiseSchedule& schedule, int k) {
  const double ab = schedule.alpha_bar(k);
  if (ab < 1e-12) {
    throw NumericalError("Tweedie estimate degenerate: alpha_bar_" + std::to_string(k) + " = " +
                         std::to_string(ab));
  }
  return std::sqrt(ab);
}
}  // namespace

Matrix tweedie_denoise(const EpsModel& model, const NoiseSchedule& schedule, int k,
                       const Matrix& X, const Condition& cond) {
  const double sab = checked_sqrt_ab(schedule, k);
  if (k == 0) return X;
  return (X - schedule.sqrt_one_minus_alpha_bar(k) * model.eps(schedule, k, X, cond)) / sab;
}

Matrix tweedie_vjp(const EpsModel& model, const NoiseSchedule& schedule, int k, const Matrix& X,
                   const Condition& cond, const Matrix& V, bool stop_gradient) {
  const double sab = checked_sqrt_ab(schedule, k);
  if (k == 0 || stop_gradient) return V / sab;
  return (V - schedule.sqrt_one_minus_alpha_bar(k) * model.eps_vjp(schedule, k, X, cond, V)) /
         sab;
}

}  // namespace doob
