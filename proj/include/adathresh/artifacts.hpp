#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adathresh/dataset.hpp"
#include "adathresh/error.hpp"
#include "adathresh/trainer.hpp"

namespace adt {

namespace detail {

inline std::string fmt(double v) { return format_double(v); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed: " + path.string());
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error(ErrorCode::io, "cannot create directory " + dir.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CSV

inline std::string metrics_csv(Variant v, const std::vector<EpochRecord>& records) {
  std::ostringstream s;
  s << "epoch,split,variant,macro_f1,micro_f1,bce,positive_ratio,train_loss,train_bce,"
       "train_margin\n";
  for (const auto& r : records) {
    if (!r.evaluated) continue;
    s << r.epoch << ",eval," << to_string(v) << ',' << detail::fmt(r.eval_macro_f1) << ','
      << detail::fmt(r.eval_micro_f1) << ',' << detail::fmt(r.eval_bce) << ','
      << detail::fmt(r.eval_positive_ratio) << ',' << detail::fmt(r.train_loss) << ','
      << detail::fmt(r.train_bce) << ',' << detail::fmt(r.train_margin) << '\n';
  }
  return s.str();
}

inline std::string weights_csv(Variant v, const std::vector<EpochRecord>& records) {
  std::ostringstream s;
  s << "epoch,variant,alpha_mean,alpha_std,beta_mean,beta_std,lambda\n";
  for (const auto& r : records) {
    const auto& w = r.weights;
    s << r.epoch << ',' << to_string(v) << ',' << detail::fmt(w.alpha_mean) << ','
      << detail::fmt(w.alpha_std) << ',' << detail::fmt(w.beta_mean) << ','
      << detail::fmt(w.beta_std) << ',' << detail::fmt(w.lambda) << '\n';
  }
  return s.str();
}

inline std::string summary_csv(const std::vector<RunResult>& runs) {
  std::ostringstream s;
  s << "variant,macro_f1,micro_f1,bce,positive_ratio,best_epoch,epochs_run\n";
  for (const auto& r : runs) {
    const auto& f = r.final_record;
    s << to_string(r.variant) << ',' << detail::fmt(f.eval_macro_f1) << ','
      << detail::fmt(f.eval_micro_f1) << ',' << detail::fmt(f.eval_bce) << ','
      << detail::fmt(f.eval_positive_ratio) << ',' << f.epoch << ',' << r.records.size()
      << '\n';
  }
  return s.str();
}

// Long-format macro-F1 curves for all runs: epoch,variant,macro_f1.
inline std::string curves_csv(const std::vector<RunResult>& runs) {
  std::ostringstream s;
  s << "epoch,variant,macro_f1\n";
  for (const auto& run : runs)
    for (const auto& r : run.records)
      if (r.evaluated)
        s << r.epoch << ',' << to_string(run.variant) << ',' << detail::fmt(r.eval_macro_f1)
          << '\n';
  return s.str();
}

// Minimal CSV reader for the files above (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::parse, "csv: no column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  auto split = [](std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      auto comma = line.find(',', start);
      cells.emplace_back(line.substr(start, comma == line.npos ? line.npos : comma - start));
      if (comma == line.npos) break;
      start = comma + 1;
    }
    return cells;
  };
  const auto lines = detail::split_lines(text);
  if (lines.empty()) return t;
  t.header = split(lines[0]);
  for (std::size_t i = 1; i < lines.size(); ++i)
    if (!lines[i].empty()) t.rows.push_back(split(lines[i]));
  return t;
}

// ---------------------------------------------------------------------------
// SVG line plots. Each series is one <polyline data-series="name"> so the
// plotted series can be recovered from the file.

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

inline std::string render_line_plot(const std::string& title, const std::string& x_label,
                                    const std::vector<PlotSeries>& series) {
  constexpr double width = 720, height = 420, left = 60, right = 160, top = 40, bottom = 50;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf"};
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!any) {
        xmin = xmax = s.x[k];
        ymin = ymax = s.y[k];
        any = true;
      }
      xmin = std::min(xmin, s.x[k]);
      xmax = std::max(xmax, s.x[k]);
      ymin = std::min(ymin, s.y[k]);
      ymax = std::max(ymax, s.y[k]);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left << "\" y=\"24\" font-size=\"16\">" << title << "</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" font-size=\"12\">"
    << x_label << "</text>\n";
  s << "<text x=\"4\" y=\"" << top + 10 << "\" font-size=\"11\">" << detail::fmt(ymax)
    << "</text>\n";
  s << "<text x=\"4\" y=\"" << top + ph << "\" font-size=\"11\">" << detail::fmt(ymin)
    << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& ser = series[i];
    const char* color = palette[i % std::size(palette)];
    s << "<polyline data-series=\"" << ser.name << "\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < ser.x.size(); ++k) {
      if (k) s << ' ';
      s << px(ser.x[k]) << ',' << py(ser.y[k]);
    }
    s << "\"/>\n";
    const double ly = top + 16 + 18 * static_cast<double>(i);
    s << "<text x=\"" << left + pw + 12 << "\" y=\"" << ly << "\" font-size=\"12\" fill=\""
      << color << "\">" << ser.name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

// Names and point counts of the series in an SVG produced by render_line_plot.
inline std::vector<std::pair<std::string, std::size_t>> parse_plot_series(const std::string& svg) {
  std::vector<std::pair<std::string, std::size_t>> out;
  const std::string key = "data-series=\"";
  std::size_t pos = 0;
  while ((pos = svg.find(key, pos)) != std::string::npos) {
    pos += key.size();
    const auto end = svg.find('"', pos);
    std::string name = svg.substr(pos, end - pos);
    const auto pts = svg.find("points=\"", end);
    const auto pts_end = svg.find('"', pts + 8);
    const std::string points = svg.substr(pts + 8, pts_end - pts - 8);
    std::size_t n = points.empty() ? 0 : 1 + static_cast<std::size_t>(std::count(
                                                 points.begin(), points.end(), ' '));
    out.emplace_back(std::move(name), n);
    pos = pts_end;
  }
  return out;
}

inline std::vector<PlotSeries> series_from_csv(const CsvTable& t, const std::string& x_col,
                                               const std::vector<std::string>& y_cols) {
  std::vector<PlotSeries> out;
  const auto xi = t.column(x_col);
  for (const auto& name : y_cols) {
    const auto yi = t.column(name);
    PlotSeries s{name, {}, {}};
    for (const auto& row : t.rows) {
      s.x.push_back(std::stod(row[xi]));
      s.y.push_back(std::stod(row[yi]));
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

// Single run: metrics.csv, weights.csv, summary.csv, macro_f1.svg, weights.svg.
inline void emit_artifacts(const RunResult& run, const std::filesystem::path& out_dir) {
  detail::require(!run.records.empty(), ErrorCode::invalid_argument, "no records to emit");
  detail::ensure_dir(out_dir);
  const std::string metrics = metrics_csv(run.variant, run.records);
  const std::string weights = weights_csv(run.variant, run.records);
  detail::write_text(out_dir / "metrics.csv", metrics);
  detail::write_text(out_dir / "weights.csv", weights);
  detail::write_text(out_dir / "summary.csv", summary_csv({run}));

  const auto mt = parse_csv(metrics);
  detail::write_text(out_dir / "macro_f1.svg",
                     render_line_plot("Eval F1 (" + std::string(to_string(run.variant)) + ")",
                                      "epoch",
                                      series_from_csv(mt, "epoch", {"macro_f1", "micro_f1"})));
  const auto wt = parse_csv(weights);
  detail::write_text(
      out_dir / "weights.svg",
      render_line_plot("Threshold weights (" + std::string(to_string(run.variant)) + ")", "epoch",
                       series_from_csv(wt, "epoch",
                                       {"alpha_mean", "alpha_std", "beta_mean", "beta_std",
                                        "lambda"})));
}

// Suite: one subdirectory per variant plus summary.csv, curves.csv, curves.svg.
inline void emit_suite_artifacts(const std::vector<RunResult>& runs,
                                 const std::filesystem::path& out_dir) {
  detail::ensure_dir(out_dir);
  for (const auto& r : runs) emit_artifacts(r, out_dir / std::string(to_string(r.variant)));
  detail::write_text(out_dir / "summary.csv", summary_csv(runs));
  detail::write_text(out_dir / "curves.csv", curves_csv(runs));

  std::vector<PlotSeries> series;
  for (const auto& run : runs) {
    PlotSeries s{std::string(to_string(run.variant)), {}, {}};
    for (const auto& r : run.records) {
      if (!r.evaluated) continue;
      s.x.push_back(static_cast<double>(r.epoch));
      s.y.push_back(r.eval_macro_f1);
    }
    series.push_back(std::move(s));
  }
  detail::write_text(out_dir / "curves.svg",
                     render_line_plot("Eval macro-F1 by variant", "epoch", series));
}

}  // namespace adt
