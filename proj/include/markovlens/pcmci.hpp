#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace markovlens {

// T x N observations, rows are time steps.
struct TimeSeriesPanel {
  Eigen::MatrixXd data;
  std::vector<std::string> names;
  // Row indices at which a new episode starts (metadata only).
  std::vector<std::size_t> episode_starts;

  std::size_t length() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t variables() const { return static_cast<std::size_t>(data.cols()); }

  // Throws ContractViolation unless N >= 2, T > 10 (tau_max + 1) and all entries are finite.
  void validate(std::size_t tau_max) const;
};

// X^var_{t - lag}
struct LaggedVar {
  std::size_t var = 0;
  std::size_t lag = 0;

  friend bool operator==(const LaggedVar&, const LaggedVar&) = default;
};

struct ParentSet {
  std::vector<LaggedVar> parents;  // strongest first
  std::vector<double> statistics;  // min |partial correlation| seen for each parent
};

struct PcmciResult {
  std::size_t n_vars = 0;
  std::size_t tau_max = 0;
  double alpha = 0.05;
  std::vector<double> val;  // n_vars * n_vars * (tau_max + 1)
  std::vector<double> p;

  static PcmciResult empty(std::size_t n_vars, std::size_t tau_max, double alpha);

  // Link source -> target at lag k (source lagged by k, target at time t).
  std::size_t index(std::size_t source, std::size_t target, std::size_t k) const {
    return (source * n_vars + target) * (tau_max + 1) + k;
  }
  double& val_at(std::size_t source, std::size_t target, std::size_t k) { return val[index(source, target, k)]; }
  double val_at(std::size_t source, std::size_t target, std::size_t k) const { return val[index(source, target, k)]; }
  double& p_at(std::size_t source, std::size_t target, std::size_t k) { return p[index(source, target, k)]; }
  double p_at(std::size_t source, std::size_t target, std::size_t k) const { return p[index(source, target, k)]; }
};

struct AggregatedResult {
  PcmciResult combined;  // mean val, Fisher-combined p
  std::size_t runs = 0;
};

inline constexpr double kPValueFloor = 1e-10;

struct PcmciOptions {
  std::size_t tau_max = 5;
  double alpha_pc = 0.05;
  // Cap on the number of source parents used in MCI; 0 means tau_max * N.
  std::size_t max_conds_px = 0;
};

// PC1 condition selection for one target variable over lags 1..tau_max.
ParentSet pc1_select_parents(const TimeSeriesPanel& panel, std::size_t target, std::size_t tau_max,
                             double alpha_pc);

// MCI tests for every (source, target, lag) with lag in 0..tau_max (no lag-0 self-links).
PcmciResult mci(const TimeSeriesPanel& panel, const std::vector<ParentSet>& parents, const PcmciOptions& options,
                double alpha);

PcmciResult run_pcmci(const TimeSeriesPanel& panel, std::size_t tau_max, double alpha, std::uint64_t seed = 0);

// Elementwise mean of val; Fisher's method on p against chi-square with 2R dof.
AggregatedResult aggregate_runs(const std::vector<PcmciResult>& results);

// Fisher's method for a single link: upper chi-square tail of -2 sum ln p.
double fisher_combine(const std::vector<double>& p_values);

// One row of a link table: parent -> child at lag -k.
struct LinkRow {
  std::size_t child = 0;
  std::size_t parent = 0;
  int lag = 0;  // 0, -1, -2, ...
  double p_value = 1.0;
  double partial_corr = 0.0;
};

// All tested links ordered by child, then ascending p-value. With
// `significant_only`, rows with p > alpha are dropped.
std::vector<LinkRow> link_table(const PcmciResult& result, bool significant_only = false);

}  // namespace markovlens
