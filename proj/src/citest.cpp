#include "markovlens/citest.hpp"

#include <algorithm>
#include <cmath>

#include "markovlens/errors.hpp"
#include "markovlens/special.hpp"

namespace markovlens {

namespace {

constexpr double kRidge = 1e-10;
constexpr double kDegenerateRatio = 1e-10;

}  // namespace

CiTestResult parcorr(std::span<const double> x, std::span<const double> y, const Eigen::MatrixXd& conditions) {
  const auto n = static_cast<Eigen::Index>(x.size());
  const Eigen::Index q = conditions.cols();
  if (static_cast<Eigen::Index>(y.size()) != n || (q > 0 && conditions.rows() != n)) {
    throw ContractViolation("parcorr: series lengths differ");
  }
  if (n <= q + 2) throw ContractViolation("parcorr: need more samples than |Z| + 2");

  Eigen::MatrixXd targets(n, 2);
  targets.col(0) = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
  targets.col(1) = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  const Eigen::RowVector2d means = targets.colwise().mean();
  targets.rowwise() -= means;
  const double x_scale = targets.col(0).norm();
  const double y_scale = targets.col(1).norm();

  Eigen::MatrixXd residuals;
  if (q == 0) {
    residuals = targets;
  } else {
    // Centering the conditions absorbs the intercept; scaling them keeps the
    // QR well conditioned without changing the fitted subspace.
    Eigen::MatrixXd design = conditions;
    design.rowwise() -= design.colwise().mean();
    for (Eigen::Index c = 0; c < q; ++c) {
      const double s = design.col(c).norm();
      if (s > 0.0) design.col(c) /= s;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    Eigen::MatrixXd beta;
    if (qr.rank() == q) {
      beta = qr.solve(targets);
    } else {
      Eigen::MatrixXd gram = design.transpose() * design;
      gram.diagonal().array() += kRidge;
      beta = gram.ldlt().solve(design.transpose() * targets);
    }
    residuals = targets - design * beta;
  }

  CiTestResult result;
  result.df = static_cast<std::size_t>(n - q - 2);
  const double rx = residuals.col(0).norm();
  const double ry = residuals.col(1).norm();
  if (x_scale == 0.0 || y_scale == 0.0 || rx <= kDegenerateRatio * x_scale || ry <= kDegenerateRatio * y_scale) {
    result.statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }
  const double r = std::clamp(residuals.col(0).dot(residuals.col(1)) / (rx * ry), -1.0, 1.0);
  result.statistic = r;
  const double df = static_cast<double>(result.df);
  if (std::abs(r) >= 1.0) {
    result.p_value = 0.0;
  } else {
    const double t = r * std::sqrt(df / (1.0 - r * r));
    result.p_value = std::clamp(stats::student_t_two_sided(t, df), 0.0, 1.0);
  }
  return result;
}

CiTestResult parcorr(std::span<const double> x, std::span<const double> y,
                     const std::vector<std::vector<double>>& conditions) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(conditions.size()));
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    if (conditions[c].size() != x.size()) throw ContractViolation("parcorr: condition length differs");
    z.col(static_cast<Eigen::Index>(c)) =
        Eigen::Map<const Eigen::VectorXd>(conditions[c].data(), static_cast<Eigen::Index>(x.size()));
  }
  return parcorr(x, y, z);
}

}  // namespace markovlens
