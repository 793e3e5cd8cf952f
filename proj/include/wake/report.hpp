#pragma once

#include "wake/csv.hpp"
#include "wake/discovery.hpp"
#include "wake/errors.hpp"
#include "wake/metrics.hpp"
#include "wake/svg.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace wake {

struct ReportArtifacts {
  std::string report_path;
  std::string fits_path;
  std::vector<std::string> figure_paths;
};

namespace detail {

inline std::string metric_name(const MetricMode& mode) {
  return mode.primary == PrimaryMetric::delta_star ? "delta_star" : "theta";
}

inline std::string direction_name(const MetricMode& mode) {
  return mode.direction == Direction::minimize ? "minimize" : "maximize";
}

inline std::vector<ResultRow> valid_rows(const std::vector<ResultRow>& rows) {
  std::vector<ResultRow> out;
  for (const ResultRow& r : rows)
    if (r.geom_valid) out.push_back(r);
  return out;
}

inline std::vector<PointXY> optima_points(
    const std::vector<OptimumPoint>& opts) {
  std::vector<PointXY> pts;
  for (const OptimumPoint& o : opts) pts.push_back({o.spacing, o.x_star});
  return pts;
}

struct FitBlock {
  bool available = false;
  std::string reason;
  ModelSelection selection;
};

inline FitBlock fit_optima(const std::vector<OptimumPoint>& opts) {
  FitBlock block;
  std::vector<PointXY> pts = optima_points(opts);
  if (pts.size() < 5) {
    block.reason = "needs at least five spacings";
    return block;
  }
  try {
    block.selection = select_model(pts);
    block.available = true;
  } catch (const std::invalid_argument& e) {
    block.reason = e.what();
  }
  return block;
}

inline nlohmann::json linear_fit_json(const LinearFit& f) {
  return {{"slope", f.slope},
          {"intercept", f.intercept},
          {"r_squared", f.r_squared},
          {"sse", f.sse},
          {"n", f.n}};
}

inline nlohmann::json fit_block_json(const FitBlock& b) {
  if (!b.available) return {{"available", false}, {"reason", b.reason}};
  nlohmann::json j;
  j["available"] = true;
  j["choice"] = b.selection.choice == ModelChoice::single ? "single"
                                                          : "two_segment";
  j["single"] = linear_fit_json(b.selection.single);
  j["two_segment"] = {
      {"breakpoint", b.selection.two_segment.breakpoint},
      {"split_index", b.selection.two_segment.split_index},
      {"total_sse", b.selection.two_segment.total_sse},
      {"left", linear_fit_json(b.selection.two_segment.left)},
      {"right", linear_fit_json(b.selection.two_segment.right)}};
  j["bic_single"] = b.selection.bic_single;
  j["bic_two"] = b.selection.bic_two;
  return j;
}

inline void fit_table(std::string& md, const std::string& label,
                      const FitBlock& b) {
  md += "### Fit of " + label + "\n\n";
  md += "| quantity | value |\n| --- | --- |\n";
  if (!b.available) {
    md += "| fit | not available |\n";
    md += "| reason | " + b.reason + " |\n\n";
    return;
  }
  const ModelSelection& s = b.selection;
  md += "| selected model | ";
  md += s.choice == ModelChoice::single ? "single" : "two_segment";
  md += " |\n";
  md += "| single slope | " + format_g9(s.single.slope) + " |\n";
  md += "| single intercept | " + format_g9(s.single.intercept) + " |\n";
  md += "| single R^2 | " + format_g9(s.single.r_squared) + " |\n";
  md += "| single SSE | " + format_g9(s.single.sse) + " |\n";
  md += "| single BIC | " + format_g9(s.bic_single) + " |\n";
  md += "| breakpoint | " + format_g9(s.two_segment.breakpoint) + " |\n";
  md += "| left slope | " + format_g9(s.two_segment.left.slope) + " |\n";
  md += "| left intercept | " + format_g9(s.two_segment.left.intercept) +
        " |\n";
  md += "| right slope | " + format_g9(s.two_segment.right.slope) + " |\n";
  md += "| right intercept | " + format_g9(s.two_segment.right.intercept) +
        " |\n";
  md += "| two-segment SSE | " + format_g9(s.two_segment.total_sse) + " |\n";
  md += "| two-segment BIC | " + format_g9(s.bic_two) + " |\n\n";
}

}  // namespace detail

/// Markdown report body. Every numeric value sits in a table cell and is a
/// pure function of the rows, so regenerating from the same CSV reproduces
/// the document byte for byte.
inline std::string render_report_markdown(const std::vector<ResultRow>& rows,
                                          const MetricMode& mode) {
  if (rows.empty())
    throw std::invalid_argument("render_report_markdown: no rows");

  const std::vector<ResultRow> valid = detail::valid_rows(rows);
  const auto delta_opts =
      best_per_spacing(rows, MetricMode::delta_star_mode());
  const auto theta_opts = best_per_spacing(rows, MetricMode::theta_mode());
  const auto primary_opts = best_per_spacing(rows, mode);

  int max_iter = 0;
  std::set<double> spacings;
  for (const ResultRow& r : rows) {
    max_iter = std::max(max_iter, r.iteration);
    spacings.insert(r.spacing);
  }

  // Count distinct iterations per invalid spacing, not distinct rows.
  std::map<double, std::set<int>> invalid_iters;
  for (const ResultRow& r : rows)
    if (!r.geom_valid) invalid_iters[r.spacing].insert(r.iteration);

  std::string md;
  md += "# Wake exploration report\n\n";
  md += "Generated from the campaign evidence table. All values below are "
        "recomputed from the stored rows; the tables are the authoritative "
        "record.\n\n";

  md += "## Campaign summary\n\n";
  md += "| quantity | value |\n| --- | --- |\n";
  md += "| iterations used | " + std::to_string(max_iter) + " |\n";
  md += "| result rows | " + std::to_string(rows.size()) + " |\n";
  md += "| geometrically valid rows | " + std::to_string(valid.size()) +
        " |\n";
  md += "| distinct spacings | " + std::to_string(spacings.size()) + " |\n";
  md += "| primary metric | " + detail::metric_name(mode) + " |\n";
  md += "| direction | " + detail::direction_name(mode) + " |\n\n";

  md += "## Optimal stations\n\n";
  md += "| S / D | x* / D | " + detail::metric_name(mode) +
        " |\n| --- | --- | --- |\n";
  for (const OptimumPoint& o : primary_opts)
    md += "| " + format_g9(o.spacing) + " | " + format_g9(o.x_star) + " | " +
          format_g9(o.value) + " |\n";
  md += "\n";

  md += "## Scaling-law fits\n\n";
  detail::fit_table(md, "x_delta* against S", detail::fit_optima(delta_opts));
  detail::fit_table(md, "x_theta* against S", detail::fit_optima(theta_opts));

  md += "## Metric divergence\n\n";
  md += "| S / D | x_delta* / D | x_theta* / D | abs dx* / D |\n"
        "| --- | --- | --- | --- |\n";
  for (const DivergenceRow& d : divergence_table(delta_opts, theta_opts))
    md += "| " + format_g9(d.spacing) + " | " + format_g9(d.x_delta_star) +
          " | " + format_g9(d.x_theta_star) + " | " +
          format_g9(d.abs_divergence) + " |\n";
  md += "\n";

  md += "## Anomalies\n\n";
  md += "| S / D | invalid iterations |\n| --- | --- |\n";
  for (const auto& [s, iters] : invalid_iters)
    md += "| " + format_g9(s) + " | " + std::to_string(iters.size()) + " |\n";
  md += "\n";

  md += "## Figures\n\n";
  md += "- ![metric landscape](landscape.svg)\n";
  md += "- ![optimal station scaling](scaling.svg)\n";
  md += "- ![metric divergence](divergence.svg)\n\n";
  md += "Machine-readable fits live in fits.json next to this file.\n";
  return md;
}

/// Companion JSON with the same fits and tables in machine form.
inline std::string render_fits_json(const std::vector<ResultRow>& rows,
                                    const MetricMode& mode) {
  if (rows.empty())
    throw std::invalid_argument("render_fits_json: no rows");
  const auto delta_opts =
      best_per_spacing(rows, MetricMode::delta_star_mode());
  const auto theta_opts = best_per_spacing(rows, MetricMode::theta_mode());

  nlohmann::json j;
  j["primary_metric"] = detail::metric_name(mode);
  j["direction"] = detail::direction_name(mode);
  j["rows"] = rows.size();
  j["fits"] = {
      {"x_delta_star", detail::fit_block_json(detail::fit_optima(delta_opts))},
      {"x_theta_star", detail::fit_block_json(detail::fit_optima(theta_opts))}};
  auto opts_json = [](const std::vector<OptimumPoint>& opts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const OptimumPoint& o : opts)
      arr.push_back({{"spacing", o.spacing},
                     {"x_star", o.x_star},
                     {"value", o.value}});
    return arr;
  };
  j["optima"] = {{"delta_star", opts_json(delta_opts)},
                 {"theta", opts_json(theta_opts)}};
  nlohmann::json div = nlohmann::json::array();
  for (const DivergenceRow& d : divergence_table(delta_opts, theta_opts))
    div.push_back({{"spacing", d.spacing},
                   {"x_delta_star", d.x_delta_star},
                   {"x_theta_star", d.x_theta_star},
                   {"abs_divergence", d.abs_divergence}});
  j["divergence"] = div;
  return j.dump(2) + "\n";
}

namespace detail {

inline void write_text_atomic(const std::string& path,
                              const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("write_text_atomic: cannot open " + tmp);
    out << body;
    if (!out) throw std::runtime_error("write_text_atomic: write failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Full artifact set: Markdown report, fits JSON and three SVG figures, all
/// derived from the rows alone.
inline ReportArtifacts generate_report(const std::vector<ResultRow>& rows,
                                       const MetricMode& mode,
                                       const std::string& out_dir) {
  if (rows.empty())
    throw std::invalid_argument("generate_report: no rows");
  std::filesystem::create_directories(out_dir);
  const auto path = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  ReportArtifacts art;
  art.report_path = path("report.md");
  art.fits_path = path("fits.json");
  detail::write_text_atomic(art.report_path,
                            render_report_markdown(rows, mode));
  detail::write_text_atomic(art.fits_path, render_fits_json(rows, mode));

  const std::vector<ResultRow> valid = detail::valid_rows(rows);
  if (valid.empty())
    throw std::invalid_argument("generate_report: no valid rows for figures");
  const auto grid = landscape_grid(valid, mode);
  const std::string metric = detail::metric_name(mode);
  detail::write_text_atomic(
      path("landscape.svg"),
      svg::render_heatmap(grid, metric + " landscape", "x_p / D", "S / D"));

  const auto delta_opts =
      best_per_spacing(rows, MetricMode::delta_star_mode());
  const auto theta_opts = best_per_spacing(rows, MetricMode::theta_mode());
  svg::Series sd{"x_delta* / D", detail::optima_points(delta_opts)};
  svg::Series st{"x_theta* / D", detail::optima_points(theta_opts)};
  detail::write_text_atomic(
      path("scaling.svg"),
      svg::render_scaling({sd, st}, "optimal station scaling", "S / D",
                          "x* / D"));
  detail::write_text_atomic(
      path("divergence.svg"),
      svg::render_divergence(divergence_table(delta_opts, theta_opts),
                             "metric divergence"));

  art.figure_paths = {path("landscape.svg"), path("scaling.svg"),
                      path("divergence.svg")};
  return art;
}

struct GroundingIssue {
  int line = 0;    // 1-based line number in the checked document
  int cell = 0;    // 1-based cell index within the table row
  std::string expected;
  std::string found;
};

namespace detail {

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

inline std::vector<std::string> table_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  // Skip the leading pipe; split on the rest. Trailing pipe yields one
  // empty tail cell which is dropped.
  for (std::size_t i = 1; i < line.size(); ++i) {
    if (line[i] == '|') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += line[i];
    }
  }
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  for (auto& c : cells) c = trim(c);
  while (!cells.empty() && cells.back().empty()) cells.pop_back();
  return cells;
}

}  // namespace detail

/// Verifies that every table cell in a report document equals the value
/// recomputed from the rows. Returns the first offending cell, or nullopt
/// when the document is fully grounded.
inline std::optional<GroundingIssue> check_grounding(
    const std::string& report_markdown, const std::vector<ResultRow>& rows,
    const MetricMode& mode) {
  const std::string expected = render_report_markdown(rows, mode);
  const auto exp_lines = detail::split_lines(expected);
  const auto got_lines = detail::split_lines(report_markdown);

  const std::size_t n = std::max(exp_lines.size(), got_lines.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::string exp = i < exp_lines.size() ? exp_lines[i] : "";
    const std::string got = i < got_lines.size() ? got_lines[i] : "";
    const bool exp_table = !exp.empty() && exp.front() == '|';
    const bool got_table = !got.empty() && got.front() == '|';
    if (!exp_table && !got_table) continue;
    const auto exp_cells = detail::table_cells(exp_table ? exp : "|");
    const auto got_cells = detail::table_cells(got_table ? got : "|");
    const std::size_t m = std::max(exp_cells.size(), got_cells.size());
    for (std::size_t c = 0; c < m; ++c) {
      const std::string ec = c < exp_cells.size() ? exp_cells[c] : "<missing>";
      const std::string gc = c < got_cells.size() ? got_cells[c] : "<missing>";
      if (ec != gc) {
        GroundingIssue issue;
        issue.line = static_cast<int>(i) + 1;
        issue.cell = static_cast<int>(c) + 1;
        issue.expected = ec;
        issue.found = gc;
        return issue;
      }
    }
  }
  return std::nullopt;
}

}  // namespace wake
