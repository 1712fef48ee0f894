#include "ace/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ace {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const PlotSpec& spec) {
  double min_pos = std::numeric_limits<double>::infinity();
  if (spec.log_y)
    for (const auto& s : series)
      for (double y : s.y)
        if (y > 0.0 && std::isfinite(y)) min_pos = std::min(min_pos, y);
  if (!std::isfinite(min_pos)) min_pos = 1e-16;
  auto ty = [&](double y) { return spec.log_y ? std::log10(std::max(y, min_pos)) : y; };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(spec.title)
    << "</text>\n";
  o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = x0 + (x1 - x0) * t / 4.0, fy = y0 + (y1 - y0) * t / 4.0;
    o << "<line x1=\"" << num(px(fx)) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(px(fx)) << "\" y2=\""
      << num(kTop + ph + 4) << "\" stroke=\"#444\"/>\n";
    o << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">"
      << tick_label(fx) << "</text>\n";
    o << "<line x1=\"" << num(kLeft - 4) << "\" y1=\"" << num(py(fy)) << "\" x2=\"" << num(kLeft) << "\" y2=\""
      << num(py(fy)) << "\" stroke=\"#444\"/>\n";
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(fy) + 4) << "\" text-anchor=\"end\">"
      << (spec.log_y ? "1e" + tick_label(fy) : tick_label(fy)) << "</text>\n";
  }
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 10) << "\" text-anchor=\"middle\">"
    << escape(spec.x_label) << "</text>\n";
  o << "<text transform=\"translate(16," << num(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(spec.y_label) << (spec.log_y ? " (log10)" : "") << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % (sizeof kPalette / sizeof *kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      o << (first ? "" : " ") << num(px(s.x[i])) << ',' << num(py(ty(s.y[i])));
      first = false;
    }
    o << "\"/>\n";
    const double ly = kTop + 10 + 16.0 * static_cast<double>(k);
    o << "<line x1=\"" << num(kLeft + pw + 10) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(kLeft + pw + 30)
      << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(kLeft + pw + 34) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

bool CsvTable::has(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::invalid_argument("csv: no column '" + name + "'");
  const auto idx = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.at(idx));
  return out;
}

std::vector<std::string> CsvTable::columns_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& h : header)
    if (h.rfind(prefix, 0) == 0) out.push_back(h);
  return out;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_csv: " + path.string() + " is empty");
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw std::runtime_error("read_csv: " + path.string() + ":" + std::to_string(lineno) + " has " +
                               std::to_string(cells.size()) + " fields, expected " + std::to_string(t.header.size()));
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        row.push_back(c.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(c));
      } catch (const std::exception&) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void plot_trace(const std::filesystem::path& trace_csv, const std::filesystem::path& out_dir) {
  const CsvTable t = read_csv(trace_csv);
  const auto steps = t.column("step");
  auto family = [&](const std::string& prefix, const std::string& title, const std::string& file, bool log_y) {
    std::vector<Series> series;
    for (const auto& name : t.columns_with_prefix(prefix)) series.push_back({name, steps, t.column(name)});
    write_text(out_dir / file, line_chart_svg(series, {title, "step", prefix.substr(0, prefix.size() - 1), log_y}));
  };
  family("gamma_", "Homotopy parameters", "gamma.svg", false);
  family("lambda_", "Dual multipliers", "lambda.svg", false);
  family("u_", "Slacks", "u.svg", false);
  std::vector<Series> eq{{"eq_error_exact", steps, t.column("eq_error_exact")}};
  for (const char* name : {"thm2_refined"})
    if (t.has(name)) eq.push_back({name, steps, t.column(name)});
  write_text(out_dir / "eq_error.svg", line_chart_svg(eq, {"Equivariance error", "step", "error", true}));
}

}  // namespace ace
