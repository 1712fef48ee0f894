#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ace {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  /// Plot log10 of the values; non-positive values are clamped to the smallest positive one.
  bool log_y = false;
};

/// Static line chart with axes, ticks and a legend. Output depends only on the inputs.
std::string line_chart_svg(const std::vector<Series>& series, const PlotSpec& spec);

/// Numeric CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  bool has(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
  /// Columns whose names start with `prefix`, in header order.
  std::vector<std::string> columns_with_prefix(const std::string& prefix) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// gamma.svg, lambda.svg, u.svg and eq_error.svg from a trace.csv.
void plot_trace(const std::filesystem::path& trace_csv, const std::filesystem::path& out_dir);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ace
