#pragma once

#include <cstddef>
#include <vector>

#include "markovlens/pcmci.hpp"

namespace markovlens {

struct MvsConfig {
  std::size_t tau_max = 5;
  double alpha_level = 0.05;
  double p_floor = kPValueFloor;

  void validate() const;
};

struct MvsContribution {
  std::size_t source = 0;
  std::size_t target = 0;
  std::size_t lag = 0;
  double abs_val = 0.0;
  double neg_log_p = 0.0;
  double weight = 0.0;  // lag - 1
};

struct MvsReport {
  double score = 0.0;
  std::vector<MvsContribution> contributions;
  std::size_t n_vars = 0;
};

// Markov Violation Score: significant links at lags 2..tau_max, each weighted
// by (k - 1) |val| (-ln p), normalized by N^2 sum_{k=2}^{tau_max} (k - 1).
// A link counts when p <= alpha_level.
MvsReport compute_mvs(const PcmciResult& result, const MvsConfig& config = {});

}  // namespace markovlens
