#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace markovlens {

struct CiTestResult {
  double statistic = 0.0;  // partial correlation in [-1, 1]
  double p_value = 1.0;    // two-sided, in [0, 1]
  std::size_t df = 0;      // n - |Z| - 2
};

// Linear partial-correlation test of x _||_ y | Z.
//
// x and y are residualized on [1, Z] by least squares, the statistic is the
// Pearson correlation of the residuals and the p-value comes from
// t = r sqrt(df / (1 - r^2)) under Student's t with df = n - |Z| - 2.
// A rank-deficient design falls back to a ridge-regularized solve; zero
// residual variance gives r = 0, p = 1.
//
// `conditions` is n x |Z| (one column per conditioning series).
CiTestResult parcorr(std::span<const double> x, std::span<const double> y, const Eigen::MatrixXd& conditions);
CiTestResult parcorr(std::span<const double> x, std::span<const double> y,
                     const std::vector<std::vector<double>>& conditions = {});

}  // namespace markovlens
