#include "markovlens/mvs.hpp"

#include <algorithm>
#include <cmath>

#include "markovlens/errors.hpp"

namespace markovlens {

void MvsConfig::validate() const {
  if (tau_max < 2) throw ContractViolation("mvs: tau_max must be >= 2");
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw ContractViolation("mvs: alpha_level must lie in (0, 1)");
  if (!(p_floor > 0.0 && p_floor < alpha_level)) throw ContractViolation("mvs: p_floor must lie in (0, alpha_level)");
}

MvsReport compute_mvs(const PcmciResult& result, const MvsConfig& config) {
  config.validate();
  if (config.tau_max > result.tau_max) {
    throw ContractViolation("mvs: tau_max " + std::to_string(config.tau_max) + " exceeds the result's " +
                            std::to_string(result.tau_max));
  }
  const std::size_t n = result.n_vars;
  MvsReport report;
  report.n_vars = n;

  double weight_sum = 0.0;
  double numerator = 0.0;
  for (std::size_t k = 2; k <= config.tau_max; ++k) {
    const double weight = static_cast<double>(k - 1);
    weight_sum += weight;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double p = result.p_at(i, j, k);
        if (!(p <= config.alpha_level)) continue;
        const double abs_val = std::abs(result.val_at(i, j, k));
        const double neg_log_p = -std::log(std::max(p, config.p_floor));
        numerator += weight * abs_val * neg_log_p;
        report.contributions.push_back({i, j, k, abs_val, neg_log_p, weight});
      }
    }
  }
  const double denominator = static_cast<double>(n * n) * weight_sum;
  report.score = report.contributions.empty() || denominator == 0.0 ? 0.0 : numerator / denominator;
  return report;
}

}  // namespace markovlens
