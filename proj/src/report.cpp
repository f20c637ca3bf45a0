#include "markovlens/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "markovlens/csv_io.hpp"
#include "markovlens/errors.hpp"
#include "markovlens/special.hpp"

namespace markovlens {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// Plot frame with linear axes and tick labels.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label, double x0, double x1, double y0, double y1)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (!(y1 > y0)) y1 = y0 + 1.0;
    x0_ = x0, x1_ = x1, y0_ = y0, y1_ = y1;
  }

  double px(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * kWidth; }
  double py(double y) const { return kTop + (1.0 - (y - y0_) / (y1_ - y0_)) * kHeight; }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    if (pts.empty()) return;
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) body_ << fixed(px(x)) << ',' << fixed(py(y)) << ' ';
    body_ << "\"/>\n";
  }

  void point(double x, double y, const std::string& color, const std::string& label) {
    body_ << "<circle cx=\"" << fixed(px(x)) << "\" cy=\"" << fixed(py(y)) << "\" r=\"4\" fill=\"" << color
          << "\"/>\n";
    body_ << "<text x=\"" << fixed(px(x) + 6) << "\" y=\"" << fixed(py(y) - 6) << "\" font-size=\"9\">"
          << escape_xml(label) << "</text>\n";
  }

  void bar(double x_center, double width, double y, double err, const std::string& color, const std::string& label) {
    const double left = px(x_center - width / 2);
    const double right = px(x_center + width / 2);
    const double top = py(std::max(y, y0_));
    const double base = py(std::max(0.0, y0_));
    body_ << "<rect x=\"" << fixed(left) << "\" y=\"" << fixed(std::min(top, base)) << "\" width=\""
          << fixed(right - left) << "\" height=\"" << fixed(std::abs(base - top)) << "\" fill=\"" << color
          << "\"/>\n";
    if (err > 0) {
      body_ << "<line x1=\"" << fixed(px(x_center)) << "\" x2=\"" << fixed(px(x_center)) << "\" y1=\""
            << fixed(py(y - err)) << "\" y2=\"" << fixed(py(y + err)) << "\" stroke=\"black\"/>\n";
    }
    body_ << "<text x=\"" << fixed(px(x_center)) << "\" y=\"" << fixed(kTop + kHeight + 14)
          << "\" font-size=\"9\" text-anchor=\"middle\">" << escape_xml(label) << "</text>\n";
  }

  void legend(const std::vector<std::pair<std::string, std::string>>& entries) {
    double y = kTop + 10;
    for (const auto& [label, color] : entries) {
      body_ << "<rect x=\"" << fixed(kLeft + kWidth + 10) << "\" y=\"" << fixed(y - 8) << "\" width=\"10\" height=\"10\" fill=\""
            << color << "\"/>\n";
      body_ << "<text x=\"" << fixed(kLeft + kWidth + 24) << "\" y=\"" << fixed(y) << "\" font-size=\"10\">"
            << escape_xml(label) << "</text>\n";
      y += 14;
    }
  }

  std::string render(bool x_ticks = true) const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLeft + kWidth + 260 << "\" height=\""
       << kTop + kHeight + 50 << "\" font-family=\"sans-serif\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kLeft + kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
       << escape_xml(title_) << "</text>\n";
    os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double yv = y0_ + (y1_ - y0_) * i / 4.0;
      os << "<text x=\"" << kLeft - 5 << "\" y=\"" << fixed(py(yv) + 3) << "\" font-size=\"9\" text-anchor=\"end\">"
         << fixed(yv, 3) << "</text>\n";
      if (x_ticks) {
        const double xv = x0_ + (x1_ - x0_) * i / 4.0;
        os << "<text x=\"" << fixed(px(xv)) << "\" y=\"" << kTop + kHeight + 14
           << "\" font-size=\"9\" text-anchor=\"middle\">" << fixed(xv, 4) << "</text>\n";
      }
    }
    os << "<text x=\"" << kLeft + kWidth / 2 << "\" y=\"" << kTop + kHeight + 36
       << "\" text-anchor=\"middle\" font-size=\"11\">" << escape_xml(x_label_) << "</text>\n";
    os << "<text x=\"14\" y=\"" << kTop + kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 14 "
       << kTop + kHeight / 2 << ")\">" << escape_xml(y_label_) << "</text>\n";
    os << body_.str() << "</svg>\n";
    return os.str();
  }

 private:
  static constexpr int kLeft = 70;
  static constexpr int kTop = 35;
  static constexpr int kWidth = 520;
  static constexpr int kHeight = 300;
  std::string title_, x_label_, y_label_;
  double x0_ = 0, x1_ = 1, y0_ = 0, y1_ = 1;
  std::ostringstream body_;
};

// Mean across seeds of the smoothed return curve, sampled on a common grid.
std::vector<std::pair<double, double>> mean_curve(const ConditionRecord& rec, std::size_t window, double x_max,
                                                  std::size_t points = 100) {
  std::vector<std::pair<double, double>> out;
  std::vector<std::vector<double>> smoothed;
  for (const RunRecord& r : rec.runs) {
    std::vector<double> returns;
    for (const auto& p : r.curve) returns.push_back(p.episode_return);
    smoothed.push_back(smooth(returns, window));
  }
  for (std::size_t g = 1; g <= points; ++g) {
    const double x = x_max * static_cast<double>(g) / static_cast<double>(points);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < rec.runs.size(); ++s) {
      const auto& curve = rec.runs[s].curve;
      // Latest completed episode at or before x.
      const auto it = std::upper_bound(curve.begin(), curve.end(), x,
                                       [](double v, const ppo::CurvePoint& p) { return v < static_cast<double>(p.timestep); });
      if (it == curve.begin()) continue;
      sum += smoothed[s][static_cast<std::size_t>(it - curve.begin()) - 1];
      ++count;
    }
    if (count > 0) out.emplace_back(x, sum / static_cast<double>(count));
  }
  return out;
}

double max_timestep(const ConditionRecord& rec) {
  double m = 0.0;
  for (const RunRecord& r : rec.runs) {
    if (!r.curve.empty()) m = std::max(m, static_cast<double>(r.curve.back().timestep));
  }
  return m;
}

std::string condition_curves_csv(const ConditionRecord& rec) {
  std::ostringstream os;
  os << "timestep,episode_return,seed,condition_id\n";
  for (const RunRecord& r : rec.runs) {
    for (const auto& p : r.curve) {
      os << p.timestep << ',' << format_double(p.episode_return) << ',' << r.seed << ',' << rec.condition.id << '\n';
    }
  }
  return os.str();
}

std::string condition_mvs_csv(const ConditionRecord& rec) {
  std::ostringstream os;
  os << "condition_id,seed_group,mvs,n_contributing_links\n";
  double links = 0.0;
  for (const RunRecord& r : rec.runs) {
    os << rec.condition.id << ',' << r.seed << ',' << format_double(r.mvs.score) << ',' << r.mvs.contributions.size()
       << '\n';
    links += static_cast<double>(r.mvs.contributions.size());
  }
  os << rec.condition.id << ",mean," << format_double(rec.mvs) << ','
     << format_double(links / static_cast<double>(std::max<std::size_t>(rec.runs.size(), 1))) << '\n';
  return os.str();
}

std::string learning_curve_svg(const ConditionRecord& rec, const ConditionRecord* baseline, std::size_t window) {
  double x_max = max_timestep(rec);
  if (baseline) x_max = std::max(x_max, max_timestep(*baseline));
  const auto mine = mean_curve(rec, window, x_max);
  std::vector<std::pair<double, double>> base;
  if (baseline && baseline != &rec) base = mean_curve(*baseline, window, x_max);
  double y0 = 0.0;
  double y1 = 1.0;
  bool first = true;
  for (const auto* series : {&mine, static_cast<const decltype(mine)*>(&base)}) {
    for (const auto& [x, y] : *series) {
      if (first) y0 = y1 = y, first = false;
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  SvgPlot plot(rec.env_name + ": " + rec.condition.id, "timestep", "episode return (moving avg " +
                                                                       std::to_string(window) + ")",
               0.0, x_max, y0, y1);
  std::vector<std::pair<std::string, std::string>> legend;
  if (!base.empty()) {
    plot.polyline(base, kPalette[0]);
    legend.emplace_back("baseline", kPalette[0]);
  }
  plot.polyline(mine, base.empty() ? kPalette[0] : kPalette[1]);
  legend.emplace_back(rec.condition.id, base.empty() ? kPalette[0] : kPalette[1]);
  plot.legend(legend);
  return plot.render();
}

std::string scatter_svg(const std::string& env, const std::vector<const ConditionRecord*>& recs) {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (i == 0) x1 = recs[i]->mvs, y0 = y1 = recs[i]->mean_return;
    x1 = std::max(x1, recs[i]->mvs);
    y0 = std::min(y0, recs[i]->mean_return);
    y1 = std::max(y1, recs[i]->mean_return);
  }
  const double xpad = x1 > 0 ? 0.1 * x1 : 0.01;
  const double ypad = y1 > y0 ? 0.1 * (y1 - y0) : 1.0;
  SvgPlot plot(env + ": final return vs MVS", "MVS", "mean final return", x0, x1 + xpad, y0 - ypad, y1 + ypad);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    plot.point(recs[i]->mvs, recs[i]->mean_return, kPalette[i % std::size(kPalette)], recs[i]->condition.id);
  }
  return plot.render();
}

std::string drop_bar_svg(const std::string& env, const std::vector<const ConditionRecord*>& bars,
                         const std::vector<double>& errors) {
  double y1 = 1.0;
  double y0 = 0.0;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    y1 = std::max(y1, bars[i]->mean_return + errors[i]);
    y0 = std::min(y0, bars[i]->mean_return - errors[i]);
  }
  SvgPlot plot(env + ": final return by dropped dimension", "condition", "mean final return", 0.0,
               static_cast<double>(bars.size()), y0, y1 * 1.05);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    plot.bar(static_cast<double>(i) + 0.5, 0.6, bars[i]->mean_return, errors[i], kPalette[i % std::size(kPalette)],
             bars[i]->condition.id);
  }
  return plot.render(false);
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

double ci95_half_width(double sd, std::size_t n, bool t_interval) {
  if (n < 2) return 0.0;
  const double z = t_interval ? stats::student_t_quantile(0.975, static_cast<double>(n - 1)) : 1.96;
  return z * sd / std::sqrt(static_cast<double>(n));
}

std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, std::max<std::size_t>(window, 1)));
  }
  return out;
}

std::vector<std::filesystem::path> emit_report(const std::vector<ConditionRecord>& records,
                                               const std::filesystem::path& out_dir, const ReportOptions& options) {
  if (records.empty()) throw ContractViolation("emit_report: no condition records");
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, text);
    written.push_back(path);
  };

  std::map<std::string, std::vector<const ConditionRecord*>> by_env;
  std::vector<std::string> env_order;
  for (const ConditionRecord& rec : records) {
    if (!by_env.count(rec.env_name)) env_order.push_back(rec.env_name);
    by_env[rec.env_name].push_back(&rec);
  }

  for (const std::string& env : env_order) {
    const auto& recs = by_env[env];
    const ConditionRecord* baseline = nullptr;
    for (const auto* r : recs) {
      if (r->condition.kind == Condition::Kind::kBaseline) baseline = r;
    }

    std::ostringstream summary;
    summary << "condition_id,mean_return,return_ci95,mvs\n";
    for (const ConditionRecord* rec : recs) {
      const auto dir = out_dir / env / rec->condition.id;
      put(dir / "curves.csv", condition_curves_csv(*rec));
      put(dir / "mvs.csv", condition_mvs_csv(*rec));
      put(dir / "learning_curve.svg", learning_curve_svg(*rec, baseline, options.smoothing_window));
      summary << rec->condition.id << ',' << format_double(rec->mean_return) << ','
              << format_double(ci95_half_width(rec->sd_return, rec->seed_count(), options.t_interval)) << ','
              << format_double(rec->mvs) << '\n';
    }
    put(out_dir / env / "summary.csv", summary.str());
    put(out_dir / env / "reward_vs_mvs.svg", scatter_svg(env, recs));

    std::vector<const ConditionRecord*> bars;
    std::vector<double> errors;
    for (const auto* r : recs) {
      if (r->condition.kind == Condition::Kind::kBaseline || r->condition.kind == Condition::Kind::kDrop) {
        bars.push_back(r);
        errors.push_back(ci95_half_width(r->sd_return, r->seed_count(), options.t_interval));
      }
    }
    if (bars.size() > (baseline ? 1u : 0u)) put(out_dir / env / "drop_returns.svg", drop_bar_svg(env, bars, errors));
  }

  nlohmann::ordered_json meta;
  meta["generated_at"] = utc_now();
  put(out_dir / "metadata.json", meta.dump(2) + "\n");
  return written;
}

}  // namespace markovlens
