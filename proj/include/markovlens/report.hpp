#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "markovlens/experiment.hpp"

namespace markovlens {

struct ReportOptions {
  // Use the Student-t multiplier with n - 1 dof instead of 1.96.
  bool t_interval = false;
  std::size_t smoothing_window = 10;
};

// Half-width of the 95% interval for the mean of `n` values with sample sd `sd`.
double ci95_half_width(double sd, std::size_t n, bool t_interval = false);

// Trailing moving average over completed episodes.
std::vector<double> smooth(const std::vector<double>& values, std::size_t window);

// Writes per-condition CSVs, a summary CSV and SVG plots per environment, and
// out_dir/metadata.json. Returns the written paths. Throws ContractViolation
// on empty records and IoError when the directory is not writable.
std::vector<std::filesystem::path> emit_report(const std::vector<ConditionRecord>& records,
                                               const std::filesystem::path& out_dir,
                                               const ReportOptions& options = {});

}  // namespace markovlens
