#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "markovlens/pcmci.hpp"

namespace markovlens {

// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& text);

std::vector<std::string> split_csv_line(const std::string& line);

// Header of variable names, then one row per time step.
void write_panel_csv(const TimeSeriesPanel& panel, const std::filesystem::path& path);
TimeSeriesPanel read_panel_csv(const std::filesystem::path& path);

// child,parent,lag,p_value,partial_corr with variable names and negative lags.
void write_links_csv(const PcmciResult& result, const std::vector<std::string>& names,
                     const std::filesystem::path& path, bool significant_only = false);
// Inverse of write_links_csv for a full table. Links missing from the file
// keep val 0 and p 1.
PcmciResult read_links_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                           std::size_t tau_max, double alpha);

// Writes `text` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace markovlens
