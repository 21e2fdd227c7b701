#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "elmes/config.hpp"
#include "elmes/error.hpp"
#include "elmes/judge.hpp"

namespace elmes {

class ReportError : public Error {
 public:
  explicit ReportError(const std::string& what)
      : Error(ErrorCategory::kEvaluation, what) {}
};

/// Decimal half-up rounding: 4.025 -> 4.03 even though the nearest double
/// is 4.02499...
double round_half_up(double value, int decimals = 2);

/// Fixed two-decimal text of the half-up rounded value.
std::string format_score(double value);

/// Means are kept at full precision; rounding happens only when a value
/// is presented.
struct ReportRow {
  std::string label;
  std::vector<double> means;  // one per numeric field
  double avg = 0.0;           // mean of `means`
  std::size_t n_cases = 0;

  double rounded_avg() const { return round_half_up(avg); }
};

struct ReportTable {
  std::vector<std::string> fields;
  std::vector<ReportRow> rows;
};

/// Numeric (int / float) fields of a format; the columns of a report.
std::vector<std::string> report_columns(std::span<const MetricField> fields);

/// Per-field mean over cases and their mean as AVG. Every result must carry
/// exactly the given fields.
ReportRow aggregate(std::span<const EvaluationResult> results,
                    std::span<const MetricField> fields, std::string label);

struct ScenarioAverages {
  std::string scenario;
  std::vector<std::pair<std::string, double>> avg_by_label;
};

struct OverallRow {
  std::string label;
  std::vector<double> scenario_avgs;  // scenario order
  double overall = 0.0;               // unweighted mean

  double rounded() const { return round_half_up(overall); }
};

struct OverallTable {
  std::vector<std::string> scenarios;
  std::vector<OverallRow> rows;  // label order of the first scenario
};

/// Unweighted mean of each label's scenario AVGs. Every label must appear in
/// every scenario.
OverallTable overall(std::span<const ScenarioAverages> scenarios);

/// RFC 4180 text: header `label,<fields...>,AVG`, two-decimal cells, CRLF.
std::string to_csv(const ReportTable& table);
std::string to_csv(const OverallTable& table);

/// Reads a report written by to_csv. Means and AVG take the cell values;
/// n_cases is unknown and left at 0.
ReportTable parse_report_csv(std::string_view text);

struct ChartDocument {
  std::string filename;
  std::string svg;
};

/// One grouped bar chart over all dimensions plus one radar chart per row.
/// Value axes span the Likert range [1, 5].
std::vector<ChartDocument> emit_charts(const ReportTable& table,
                                       std::string_view run_name);

}  // namespace elmes
