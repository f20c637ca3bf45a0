#include "markovlens/pcmci.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "markovlens/citest.hpp"
#include "markovlens/errors.hpp"
#include "markovlens/log.hpp"
#include "markovlens/special.hpp"

namespace markovlens {

namespace {

// Every test in one PCMCI call uses rows [2 tau_max, T): shifted source
// parents reach back up to 2 tau_max steps.
std::size_t window_start(std::size_t tau_max) { return 2 * tau_max; }

class LaggedView {
 public:
  LaggedView(const TimeSeriesPanel& panel, std::size_t tau_max)
      : data_(panel.data), start_(window_start(tau_max)), rows_(panel.length() - start_) {}

  std::size_t rows() const { return rows_; }

  std::span<const double> column(LaggedVar v) const {
    return {data_.col(static_cast<Eigen::Index>(v.var)).data() + (start_ - v.lag), rows_};
  }

  Eigen::MatrixXd conditions(const std::vector<LaggedVar>& z) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(z.size()));
    for (std::size_t c = 0; c < z.size(); ++c) {
      const auto col = column(z[c]);
      m.col(static_cast<Eigen::Index>(c)) =
          Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(col.size()));
    }
    return m;
  }

 private:
  const Eigen::MatrixXd& data_;
  std::size_t start_;
  std::size_t rows_;
};

bool is_constant(const Eigen::MatrixXd& data, std::size_t var) {
  const auto col = data.col(static_cast<Eigen::Index>(var));
  return col.maxCoeff() == col.minCoeff();
}

}  // namespace

void TimeSeriesPanel::validate(std::size_t tau_max) const {
  if (variables() < 2) throw ContractViolation("panel needs at least 2 variables");
  if (length() <= 10 * (tau_max + 1)) {
    throw ContractViolation("panel too short: T = " + std::to_string(length()) + " must exceed 10 (tau_max + 1)");
  }
  if (!data.allFinite()) throw ContractViolation("panel contains non-finite entries");
  if (!names.empty() && names.size() != variables()) {
    throw ContractViolation("panel names do not match the variable count");
  }
}

PcmciResult PcmciResult::empty(std::size_t n_vars, std::size_t tau_max, double alpha) {
  PcmciResult r;
  r.n_vars = n_vars;
  r.tau_max = tau_max;
  r.alpha = alpha;
  r.val.assign(n_vars * n_vars * (tau_max + 1), 0.0);
  r.p.assign(r.val.size(), 1.0);
  return r;
}

ParentSet pc1_select_parents(const TimeSeriesPanel& panel, std::size_t target, std::size_t tau_max,
                             double alpha_pc) {
  if (tau_max < 1) throw ContractViolation("pc1_select_parents: tau_max must be >= 1");
  panel.validate(tau_max);
  if (target >= panel.variables()) throw ContractViolation("pc1_select_parents: target out of range");

  ParentSet out;
  if (is_constant(panel.data, target)) {
    log_warning("PC1: variable " + std::to_string(target) + " is constant; it gets no parents");
    return out;
  }

  const LaggedView view(panel, tau_max);
  std::vector<LaggedVar> candidates;
  for (std::size_t var = 0; var < panel.variables(); ++var) {
    for (std::size_t lag = 1; lag <= tau_max; ++lag) candidates.push_back({var, lag});
  }
  std::vector<double> min_abs(panel.variables() * (tau_max + 1), std::numeric_limits<double>::infinity());
  auto key = [tau_max](LaggedVar v) { return v.var * (tau_max + 1) + v.lag; };

  const auto y = view.column({target, 0});
  for (std::size_t q = 0; !candidates.empty() && q <= candidates.size() - 1; ++q) {
    std::vector<LaggedVar> removed;
    for (const LaggedVar& c : candidates) {
      // Condition on the q strongest other surviving candidates.
      std::vector<LaggedVar> z;
      for (const LaggedVar& other : candidates) {
        if (z.size() == q) break;
        if (!(other == c)) z.push_back(other);
      }
      const CiTestResult res = parcorr(view.column(c), y, view.conditions(z));
      double& m = min_abs[key(c)];
      m = std::min(m, std::abs(res.statistic));
      if (res.p_value > alpha_pc) removed.push_back(c);
    }
    std::erase_if(candidates, [&](const LaggedVar& c) {
      return std::find(removed.begin(), removed.end(), c) != removed.end();
    });
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](const LaggedVar& a, const LaggedVar& b) { return min_abs[key(a)] > min_abs[key(b)]; });
  }

  out.parents = candidates;
  for (const LaggedVar& c : candidates) out.statistics.push_back(min_abs[key(c)]);
  return out;
}

PcmciResult mci(const TimeSeriesPanel& panel, const std::vector<ParentSet>& parents, const PcmciOptions& options,
                double alpha) {
  const std::size_t n = panel.variables();
  const std::size_t tau_max = options.tau_max;
  panel.validate(tau_max);
  if (parents.size() != n) throw ContractViolation("mci: need one parent set per variable");

  const std::size_t max_px = options.max_conds_px > 0 ? options.max_conds_px : tau_max * n;
  const LaggedView view(panel, tau_max);
  PcmciResult result = PcmciResult::empty(n, tau_max, alpha);

  for (std::size_t j = 0; j < n; ++j) {
    const auto y = view.column({j, 0});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k <= tau_max; ++k) {
        if (i == j && k == 0) continue;
        const LaggedVar x{i, k};
        std::vector<LaggedVar> z;
        for (const LaggedVar& pj : parents[j].parents) {
          if (!(pj == x)) z.push_back(pj);
        }
        const auto& px = parents[i].parents;
        for (std::size_t c = 0; c < std::min(max_px, px.size()); ++c) {
          const LaggedVar shifted{px[c].var, px[c].lag + k};
          if (std::find(z.begin(), z.end(), shifted) == z.end()) z.push_back(shifted);
        }
        if (view.rows() < z.size() + 3) {
          log_warning("MCI: effective sample too small for link " + std::to_string(i) + " -> " +
                      std::to_string(j) + " at lag " + std::to_string(k));
          continue;
        }
        const CiTestResult res = parcorr(view.column(x), y, view.conditions(z));
        result.val_at(i, j, k) = res.statistic;
        result.p_at(i, j, k) = std::clamp(res.p_value, kPValueFloor, 1.0);
      }
    }
  }
  return result;
}

PcmciResult run_pcmci(const TimeSeriesPanel& panel, std::size_t tau_max, double alpha, std::uint64_t /*seed*/) {
  panel.validate(tau_max);
  std::vector<ParentSet> parents;
  parents.reserve(panel.variables());
  for (std::size_t j = 0; j < panel.variables(); ++j) {
    parents.push_back(pc1_select_parents(panel, j, tau_max, alpha));
  }
  return mci(panel, parents, PcmciOptions{tau_max, alpha, 0}, alpha);
}

double fisher_combine(const std::vector<double>& p_values) {
  if (p_values.empty()) throw ContractViolation("fisher_combine: no p-values");
  double statistic = 0.0;
  for (double p : p_values) statistic -= 2.0 * std::log(std::max(p, kPValueFloor));
  const double combined = stats::chi_square_sf(statistic, 2.0 * static_cast<double>(p_values.size()));
  return std::clamp(combined, kPValueFloor, 1.0);
}

AggregatedResult aggregate_runs(const std::vector<PcmciResult>& results) {
  if (results.empty()) throw ContractViolation("aggregate_runs: no results");
  const PcmciResult& first = results.front();
  for (const PcmciResult& r : results) {
    if (r.n_vars != first.n_vars || r.tau_max != first.tau_max || r.val.size() != first.val.size() ||
        r.p.size() != first.p.size() || r.alpha != first.alpha) {
      throw ContractViolation("aggregate_runs: results differ in shape, alpha or tau_max");
    }
  }
  AggregatedResult out;
  out.runs = results.size();
  out.combined = PcmciResult::empty(first.n_vars, first.tau_max, first.alpha);
  std::vector<double> ps(results.size());
  for (std::size_t e = 0; e < first.val.size(); ++e) {
    double sum = 0.0;
    for (std::size_t r = 0; r < results.size(); ++r) {
      sum += results[r].val[e];
      ps[r] = results[r].p[e];
    }
    out.combined.val[e] = sum / static_cast<double>(results.size());
    out.combined.p[e] = fisher_combine(ps);
  }
  return out;
}

std::vector<LinkRow> link_table(const PcmciResult& result, bool significant_only) {
  std::vector<LinkRow> rows;
  for (std::size_t j = 0; j < result.n_vars; ++j) {
    const std::size_t first = rows.size();
    for (std::size_t i = 0; i < result.n_vars; ++i) {
      for (std::size_t k = 0; k <= result.tau_max; ++k) {
        if (i == j && k == 0) continue;
        const double p = result.p_at(i, j, k);
        if (significant_only && p > result.alpha) continue;
        rows.push_back({j, i, -static_cast<int>(k), p, result.val_at(i, j, k)});
      }
    }
    std::stable_sort(rows.begin() + static_cast<std::ptrdiff_t>(first), rows.end(),
                     [](const LinkRow& a, const LinkRow& b) { return a.p_value < b.p_value; });
  }
  return rows;
}

}  // namespace markovlens
