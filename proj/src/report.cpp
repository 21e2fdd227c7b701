#include "elmes/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace elmes {
namespace {

std::string csv_cell(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool row_has_content = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      row_has_content = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      row_has_content = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (row_has_content || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
      }
      row.clear();
      cell.clear();
      row_has_content = false;
    } else {
      cell.push_back(c);
      row_has_content = true;
    }
  }
  if (quoted) throw ReportError("report CSV has an unterminated quoted cell");
  if (row_has_content || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

double mean(std::span<const double> values) {
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double scaled = value * scale;
  // Absorb binary representation error before deciding the half.
  const double nudge = 1e-9 * std::max(1.0, std::fabs(scaled));
  const double rounded = scaled >= 0 ? std::floor(scaled + 0.5 + nudge)
                                     : -std::floor(-scaled + 0.5 + nudge);
  return rounded / scale;
}

std::string format_score(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", round_half_up(value));
  return buf;
}

std::vector<std::string> report_columns(std::span<const MetricField> fields) {
  std::vector<std::string> out;
  for (const MetricField& f : fields) {
    if (f.type == MetricType::kInt || f.type == MetricType::kFloat) {
      out.push_back(f.name);
    }
  }
  return out;
}

ReportRow aggregate(std::span<const EvaluationResult> results,
                    std::span<const MetricField> fields, std::string label) {
  if (results.empty()) throw ReportError("cannot aggregate an empty result set");
  const std::vector<std::string> columns = report_columns(fields);
  if (columns.empty()) throw ReportError("format has no numeric fields to aggregate");

  std::set<std::string> expected;
  for (const MetricField& f : fields) expected.insert(f.name);

  ReportRow row;
  row.label = std::move(label);
  row.n_cases = results.size();
  std::vector<double> sums(columns.size(), 0.0);
  for (const EvaluationResult& r : results) {
    std::set<std::string> got;
    if (r.values.is_object()) {
      for (const auto& [k, _] : r.values.items()) got.insert(k);
    }
    if (got != expected) {
      throw ReportError("result for case '" + r.case_id +
                        "' does not carry exactly the report's fields");
    }
    for (std::size_t i = 0; i < columns.size(); ++i) {
      const auto& v = r.values.at(columns[i]);
      if (!v.is_number()) {
        throw ReportError("case '" + r.case_id + "' field '" + columns[i] +
                          "' is not numeric");
      }
      sums[i] += v.get<double>();
    }
  }
  for (const double s : sums) row.means.push_back(s / static_cast<double>(results.size()));
  row.avg = mean(row.means);
  return row;
}

OverallTable overall(std::span<const ScenarioAverages> scenarios) {
  if (scenarios.empty()) throw ReportError("no scenarios to combine");
  OverallTable table;
  std::vector<std::map<std::string, double>> lookup;
  for (const ScenarioAverages& s : scenarios) {
    table.scenarios.push_back(s.scenario);
    std::map<std::string, double> m;
    for (const auto& [label, avg] : s.avg_by_label) m[label] = avg;
    lookup.push_back(std::move(m));
  }
  for (const auto& [label, _] : scenarios.front().avg_by_label) {
    OverallRow row;
    row.label = label;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      const auto it = lookup[i].find(label);
      if (it == lookup[i].end()) {
        throw ReportError("label '" + label + "' has no score in scenario '" +
                          scenarios[i].scenario + "'");
      }
      row.scenario_avgs.push_back(it->second);
    }
    row.overall = mean(row.scenario_avgs);
    table.rows.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < scenarios.size(); ++i) {
    for (const auto& [label, _] : scenarios[i].avg_by_label) {
      if (!lookup.front().count(label)) {
        throw ReportError("label '" + label + "' has no score in scenario '" +
                          scenarios.front().scenario + "'");
      }
    }
  }
  return table;
}

std::string to_csv(const ReportTable& table) {
  std::string out = "label";
  for (const auto& f : table.fields) out += "," + csv_cell(f);
  out += ",AVG\r\n";
  for (const ReportRow& row : table.rows) {
    out += csv_cell(row.label);
    for (const double m : row.means) out += "," + format_score(m);
    out += "," + format_score(row.avg) + "\r\n";
  }
  return out;
}

std::string to_csv(const OverallTable& table) {
  std::string out = "label";
  for (const auto& s : table.scenarios) out += "," + csv_cell(s);
  out += ",Overall\r\n";
  for (const OverallRow& row : table.rows) {
    out += csv_cell(row.label);
    for (const double v : row.scenario_avgs) out += "," + format_score(v);
    out += "," + format_score(row.overall) + "\r\n";
  }
  return out;
}

ReportTable parse_report_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw ReportError("report CSV is empty");
  const auto& header = rows.front();
  if (header.size() < 3 || header.back() != "AVG") {
    throw ReportError("report CSV header must be label,<fields...>,AVG");
  }
  ReportTable table;
  table.fields.assign(header.begin() + 1, header.end() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != header.size()) {
      throw ReportError("report CSV row " + std::to_string(r + 1) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    }
    ReportRow row;
    row.label = cells.front();
    try {
      for (std::size_t c = 1; c + 1 < cells.size(); ++c) {
        row.means.push_back(std::stod(cells[c]));
      }
      row.avg = std::stod(cells.back());
    } catch (const std::exception&) {
      throw ReportError("report CSV row " + std::to_string(r + 1) +
                        " has a non-numeric score");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace elmes
