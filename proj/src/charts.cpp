#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "elmes/report.hpp"

namespace elmes {
namespace {

constexpr std::array<const char*, 12> kPalette = {
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
    "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#1f77b4", "#8c564b"};

std::string xml_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double unit(double v) {
  return std::clamp((v - kLikertMin) / double(kLikertMax - kLikertMin), 0.0, 1.0);
}

std::string file_safe(std::string_view label) {
  std::string out;
  for (const char c : label) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
                    c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? "row" : out;
}

std::string bar_chart(const ReportTable& table, std::string_view title) {
  const double bar_w = 14;
  const double group_gap = 24;
  const double left = 60, top = 50, plot_h = 300, bottom_pad = 120;
  const std::size_t n_rows = table.rows.size();
  const std::size_t n_fields = table.fields.size();
  const double group_w = bar_w * static_cast<double>(std::max<std::size_t>(n_rows, 1));
  const double plot_w = static_cast<double>(n_fields) * (group_w + group_gap) + group_gap;
  const double legend_w = 200;
  const double width = left + plot_w + legend_w;
  const double height = top + plot_h + bottom_pad;
  const double base_y = top + plot_h;
  auto y_of = [&](double v) { return base_y - unit(v) * plot_h; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) +
       "\" height=\"" + num(height) + "\" viewBox=\"0 0 " + num(width) + " " +
       num(height) + "\">\n";
  s += "<title>" + xml_escape(title) + "</title>\n";
  s += "<text x=\"" + num(left) + "\" y=\"24\" font-size=\"16\">" +
       xml_escape(title) + "</text>\n";
  for (int tick = kLikertMin; tick <= kLikertMax; ++tick) {
    const double y = y_of(tick);
    s += "<line class=\"grid\" x1=\"" + num(left) + "\" y1=\"" + num(y) + "\" x2=\"" +
         num(left + plot_w) + "\" y2=\"" + num(y) + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + num(left - 8) + "\" y=\"" + num(y + 4) +
         "\" font-size=\"11\" text-anchor=\"end\">" + std::to_string(tick) + "</text>\n";
  }
  for (std::size_t f = 0; f < n_fields; ++f) {
    const double gx = left + group_gap + static_cast<double>(f) * (group_w + group_gap);
    for (std::size_t r = 0; r < n_rows; ++r) {
      const double v = table.rows[r].means[f];
      const double y = y_of(v);
      s += "<rect class=\"bar\" data-row=\"" + xml_escape(table.rows[r].label) +
           "\" data-field=\"" + xml_escape(table.fields[f]) + "\" data-value=\"" +
           format_score(v) + "\" x=\"" + num(gx + static_cast<double>(r) * bar_w) +
           "\" y=\"" + num(y) + "\" width=\"" + num(bar_w - 2) + "\" height=\"" +
           num(base_y - y) + "\" fill=\"" + kPalette[r % kPalette.size()] + "\"/>\n";
    }
    const double cx = gx + group_w / 2;
    s += "<text x=\"" + num(cx) + "\" y=\"" + num(base_y + 14) +
         "\" font-size=\"11\" text-anchor=\"end\" transform=\"rotate(-40 " + num(cx) +
         " " + num(base_y + 14) + ")\">" + xml_escape(table.fields[f]) + "</text>\n";
  }
  s += "<line x1=\"" + num(left) + "\" y1=\"" + num(base_y) + "\" x2=\"" +
       num(left + plot_w) + "\" y2=\"" + num(base_y) + "\" stroke=\"#333\"/>\n";
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double ly = top + static_cast<double>(r) * 18;
    const double lx = left + plot_w + 16;
    s += "<rect x=\"" + num(lx) + "\" y=\"" + num(ly) + "\" width=\"12\" height=\"12\" fill=\"" +
         kPalette[r % kPalette.size()] + "\"/>\n";
    s += "<text x=\"" + num(lx + 18) + "\" y=\"" + num(ly + 10) + "\" font-size=\"11\">" +
         xml_escape(table.rows[r].label) + " (" + format_score(table.rows[r].avg) +
         ")</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string radar_chart(const ReportTable& table, std::size_t row_index,
                        std::string_view title) {
  const ReportRow& row = table.rows[row_index];
  const double radius = 150, cx = 260, cy = 230;
  const double width = 520, height = 460;
  const std::size_t n = table.fields.size();
  auto point = [&](std::size_t i, double r) {
    const double angle = -std::numbers::pi / 2 +
                         2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    return std::pair{cx + r * std::cos(angle), cy + r * std::sin(angle)};
  };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) +
       "\" height=\"" + num(height) + "\" viewBox=\"0 0 " + num(width) + " " +
       num(height) + "\">\n";
  s += "<title>" + xml_escape(title) + "</title>\n";
  s += "<text x=\"16\" y=\"24\" font-size=\"16\">" + xml_escape(title) + "</text>\n";
  // level 1 sits at the centre, so rings start at 2
  for (int level = kLikertMin + 1; level <= kLikertMax; ++level) {
    s += "<circle class=\"ring\" data-level=\"" + std::to_string(level) + "\" cx=\"" +
         num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(unit(level) * radius) +
         "\" fill=\"none\" stroke=\"#ddd\"/>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = point(i, radius);
    const auto [lx, ly] = point(i, radius + 22);
    s += "<line class=\"axis\" x1=\"" + num(cx) + "\" y1=\"" + num(cy) + "\" x2=\"" +
         num(x) + "\" y2=\"" + num(y) + "\" stroke=\"#bbb\"/>\n";
    s += "<text x=\"" + num(lx) + "\" y=\"" + num(ly) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + xml_escape(table.fields[i]) +
         "</text>\n";
  }
  std::string points;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = point(i, unit(row.means[i]) * radius);
    if (!points.empty()) points.push_back(' ');
    points += num(x) + "," + num(y);
  }
  const char* color = kPalette[row_index % kPalette.size()];
  s += "<polygon class=\"series\" points=\"" + points + "\" fill=\"" + color +
       "\" fill-opacity=\"0.3\" stroke=\"" + color + "\"/>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace

std::vector<ChartDocument> emit_charts(const ReportTable& table,
                                       std::string_view run_name) {
  if (table.rows.empty() || table.fields.empty()) {
    throw ReportError("cannot chart an empty report");
  }
  for (const ReportRow& row : table.rows) {
    if (row.means.size() != table.fields.size()) {
      throw ReportError("row '" + row.label + "' does not match the report's columns");
    }
  }
  const std::string run(run_name);
  std::vector<ChartDocument> out;
  out.push_back({run + "_bars.svg", bar_chart(table, run)});
  std::set<std::string> used;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::string stem = file_safe(table.rows[r].label);
    std::string name = stem;
    for (int k = 2; !used.insert(name).second; ++k) name = stem + "_" + std::to_string(k);
    out.push_back({run + "_radar_" + name + ".svg",
                   radar_chart(table, r, run + ": " + table.rows[r].label)});
  }
  return out;
}

}  // namespace elmes
