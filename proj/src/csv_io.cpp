#include "markovlens/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "markovlens/errors.hpp"

namespace markovlens {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  if (begin < end && text[begin] == '+') ++begin;
  double v = 0.0;
  const auto res = std::from_chars(text.data() + begin, text.data() + end, v);
  if (res.ec != std::errc() || res.ptr != text.data() + end) {
    throw IoError("not a number: '" + text + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

void write_panel_csv(const TimeSeriesPanel& panel, const std::filesystem::path& path) {
  std::ostringstream os;
  for (std::size_t j = 0; j < panel.variables(); ++j) {
    os << (j ? "," : "") << (panel.names.size() == panel.variables() ? panel.names[j] : "X" + std::to_string(j));
  }
  os << '\n';
  for (Eigen::Index t = 0; t < panel.data.rows(); ++t) {
    for (Eigen::Index j = 0; j < panel.data.cols(); ++j) os << (j ? "," : "") << format_double(panel.data(t, j));
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

TimeSeriesPanel read_panel_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read panel " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("panel " + path.string() + " is empty");
  TimeSeriesPanel panel;
  panel.names = split_csv_line(line);
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != panel.names.size()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(panel.names.size()) + " fields, got " + std::to_string(fields.size()));
    }
    for (const auto& f : fields) {
      try {
        values.push_back(parse_double(f));
      } catch (const IoError& e) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    ++rows;
  }
  const auto cols = static_cast<Eigen::Index>(panel.names.size());
  panel.data.resize(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t t = 0; t < rows; ++t) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      panel.data(static_cast<Eigen::Index>(t), j) = values[t * panel.names.size() + static_cast<std::size_t>(j)];
    }
  }
  return panel;
}

void write_links_csv(const PcmciResult& result, const std::vector<std::string>& names,
                     const std::filesystem::path& path, bool significant_only) {
  if (names.size() != result.n_vars) throw ContractViolation("write_links_csv: name count mismatch");
  std::ostringstream os;
  os << "child,parent,lag,p_value,partial_corr\n";
  for (const LinkRow& row : link_table(result, significant_only)) {
    os << names[row.child] << ',' << names[row.parent] << ',' << row.lag << ',' << format_double(row.p_value) << ','
       << format_double(row.partial_corr) << '\n';
  }
  write_file_atomic(path, os.str());
}

PcmciResult read_links_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                           std::size_t tau_max, double alpha) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read link table " + path.string());
  auto index_of = [&](const std::string& name) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw IoError(path.string() + ": unknown variable '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  };
  PcmciResult result = PcmciResult::empty(names.size(), tau_max, alpha);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw IoError(path.string() + ": malformed row '" + line + "'");
    const long lag = -std::stol(f[2]);
    if (lag < 0 || static_cast<std::size_t>(lag) > tau_max) throw IoError(path.string() + ": lag out of range");
    const std::size_t child = index_of(f[0]);
    const std::size_t parent = index_of(f[1]);
    result.p_at(parent, child, static_cast<std::size_t>(lag)) = parse_double(f[3]);
    result.val_at(parent, child, static_cast<std::size_t>(lag)) = parse_double(f[4]);
  }
  return result;
}

}  // namespace markovlens
