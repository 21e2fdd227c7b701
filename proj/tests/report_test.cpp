#include <gtest/gtest.h>

#include <regex>

#include "elmes/report.hpp"

namespace elmes {
namespace {

using json = nlohmann::ordered_json;

std::vector<MetricField> float_fields(std::size_t n) {
  std::vector<MetricField> f;
  for (std::size_t i = 0; i < n; ++i) {
    f.push_back({"F" + std::to_string(i), MetricType::kFloat, ""});
  }
  return f;
}

EvaluationResult result(const std::vector<MetricField>& fields, const std::vector<double>& v,
                        std::string id = "c") {
  EvaluationResult r;
  r.case_id = std::move(id);
  r.values = json::object();
  for (std::size_t i = 0; i < fields.size(); ++i) r.values[fields[i].name] = v[i];
  return r;
}

TEST(Rounding, HalfUp) {
  EXPECT_DOUBLE_EQ(round_half_up(4.025), 4.03);
  EXPECT_DOUBLE_EQ(round_half_up(3.925), 3.93);
  EXPECT_DOUBLE_EQ(round_half_up(3.595), 3.60);
  EXPECT_DOUBLE_EQ(round_half_up(2.1049), 2.10);
  EXPECT_DOUBLE_EQ(round_half_up(5.0), 5.0);
  EXPECT_EQ(format_score(4.025), "4.03");
  EXPECT_EQ(format_score(1), "1.00");
}

TEST(Aggregate, SingleCase) {
  const auto f = float_fields(6);
  const std::vector<EvaluationResult> rs = {result(f, {4.35, 4.70, 3.55, 3.60, 3.95, 4.00})};
  const ReportRow row = aggregate(rs, f, "GPT-4o");
  EXPECT_NEAR(row.avg, 4.025, 1e-12);
  EXPECT_EQ(format_score(row.avg), "4.03");
  EXPECT_EQ(row.n_cases, 1u);
}

TEST(Aggregate, FiveDimensions) {
  const auto f = float_fields(5);
  const std::vector<EvaluationResult> rs = {result(f, {4.2, 4.3, 4.8, 4.5, 4.5})};
  EXPECT_EQ(format_score(aggregate(rs, f, "x").avg), "4.46");
}

TEST(Aggregate, ConstantCase) {
  std::vector<MetricField> f = {{"a", MetricType::kInt, ""}, {"b", MetricType::kInt, ""}};
  std::vector<EvaluationResult> rs;
  for (int i = 0; i < 7; ++i) rs.push_back(result(f, {5, 5}, std::to_string(i)));
  const ReportRow row = aggregate(rs, f, "x");
  EXPECT_EQ(row.means, (std::vector<double>{5.0, 5.0}));
  EXPECT_EQ(format_score(row.avg), "5.00");
}

TEST(Aggregate, MeansOverCases) {
  std::vector<MetricField> f = {{"a", MetricType::kInt, ""}, {"b", MetricType::kInt, ""}};
  const std::vector<EvaluationResult> rs = {result(f, {1, 2}, "x"), result(f, {2, 5}, "y")};
  const ReportRow row = aggregate(rs, f, "r");
  EXPECT_DOUBLE_EQ(row.means[0], 1.5);
  EXPECT_DOUBLE_EQ(row.means[1], 3.5);
  EXPECT_DOUBLE_EQ(row.avg, 2.5);
}

TEST(Aggregate, SkipsTextFields) {
  std::vector<MetricField> f = {{"a", MetricType::kInt, ""}, {"why", MetricType::kStr, ""}};
  EvaluationResult r;
  r.values = json{{"a", 3}, {"why", "fine"}};
  const ReportRow row = aggregate(std::vector<EvaluationResult>{r}, f, "x");
  EXPECT_EQ(row.means.size(), 1u);
  EXPECT_EQ(report_columns(f), std::vector<std::string>{"a"});
}

TEST(Aggregate, Errors) {
  const auto f = float_fields(2);
  EXPECT_THROW(aggregate({}, f, "x"), ReportError);
  EvaluationResult odd;
  odd.values = json{{"F0", 1}};
  EXPECT_THROW(aggregate(std::vector<EvaluationResult>{result(f, {1, 2}), odd}, f, "x"),
               ReportError);
}

TEST(Overall, Examples) {
  const std::vector<ScenarioAverages> s = {
      {"a", {{"GPT-4o", 4.03}, {"Gemini", 4.55}}},
      {"b", {{"GPT-4o", 4.18}, {"Gemini", 4.38}}},
      {"c", {{"GPT-4o", 4.17}, {"Gemini", 4.25}}},
      {"d", {{"GPT-4o", 3.32}, {"Gemini", 4.46}}}};
  const OverallTable t = overall(s);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(format_score(t.rows[0].overall), "3.93");
  EXPECT_EQ(format_score(t.rows[1].overall), "4.41");
  EXPECT_EQ(t.scenarios.size(), 4u);
}

TEST(Overall, IdenticalValues) {
  const std::vector<ScenarioAverages> s = {{"a", {{"m", 3.7}}}, {"b", {{"m", 3.7}}}};
  EXPECT_DOUBLE_EQ(overall(s).rows[0].rounded(), 3.7);
}

TEST(Overall, MissingLabel) {
  const std::vector<ScenarioAverages> s = {{"a", {{"m", 3.0}, {"n", 2.0}}}, {"b", {{"m", 3.0}}}};
  EXPECT_THROW(overall(s), ReportError);
  const std::vector<ScenarioAverages> s2 = {{"a", {{"m", 3.0}}}, {"b", {{"m", 3.0}, {"n", 2.0}}}};
  EXPECT_THROW(overall(s2), ReportError);
}

TEST(Csv, Shapes) {
  ReportTable t;
  t.fields = {"Accuracy", "Goal, Alignment"};
  EXPECT_EQ(to_csv(t), "label,Accuracy,\"Goal, Alignment\",AVG\r\n");
  t.rows.push_back({"GPT-4o", {4.025, 3.0}, 3.5125, 2});
  const std::string csv = to_csv(t);
  EXPECT_EQ(csv, "label,Accuracy,\"Goal, Alignment\",AVG\r\nGPT-4o,4.03,3.00,3.51\r\n");
  const ReportTable back = parse_report_csv(csv);
  EXPECT_EQ(back.fields, t.fields);
  EXPECT_EQ(back.rows[0].label, "GPT-4o");
  EXPECT_DOUBLE_EQ(back.rows[0].avg, 3.51);
}

TEST(Csv, RejectsBadInput) {
  EXPECT_THROW(parse_report_csv(""), ReportError);
  EXPECT_THROW(parse_report_csv("a,b\r\n"), ReportError);
  EXPECT_THROW(parse_report_csv("label,x,AVG\r\nm,1\r\n"), ReportError);
  EXPECT_THROW(parse_report_csv("label,x,AVG\r\nm,abc,1\r\n"), ReportError);
  EXPECT_THROW(parse_report_csv("label,x,AVG\r\n\"m,1,1\r\n"), ReportError);
}

ReportTable table(std::size_t rows, std::size_t dims, double value) {
  ReportTable t;
  for (std::size_t d = 0; d < dims; ++d) t.fields.push_back("D" + std::to_string(d));
  for (std::size_t r = 0; r < rows; ++r) {
    t.rows.push_back({"model " + std::to_string(r), std::vector<double>(dims, value), value, 1});
  }
  return t;
}

std::vector<std::pair<double, double>> polygon_points(const std::string& svg) {
  const std::regex poly(R"re(<polygon class="series" points="([^"]*)")re");
  std::smatch m;
  if (!std::regex_search(svg, m, poly)) return {};
  std::vector<std::pair<double, double>> out;
  std::istringstream ss(m[1].str());
  std::string pt;
  while (ss >> pt) {
    const auto comma = pt.find(',');
    out.emplace_back(std::stod(pt.substr(0, comma)), std::stod(pt.substr(comma + 1)));
  }
  return out;
}

double outer_radius(const std::string& svg, double* cx, double* cy) {
  const std::regex ring(
      R"re(<circle class="ring" data-level="5" cx="([0-9.]+)" cy="([0-9.]+)" r="([0-9.]+)")re");
  std::smatch m;
  if (!std::regex_search(svg, m, ring)) return -1;
  *cx = std::stod(m[1]);
  *cy = std::stod(m[2]);
  return std::stod(m[3]);
}

TEST(Charts, Counts) {
  const auto charts = emit_charts(table(12, 6, 3.0), "run");
  ASSERT_EQ(charts.size(), 13u);
  EXPECT_EQ(charts[0].filename, "run_bars.svg");
  EXPECT_EQ(charts[1].filename, "run_radar_model_0.svg");
  std::size_t bars = 0;
  for (std::size_t pos = 0; (pos = charts[0].svg.find("class=\"bar\"", pos)) != std::string::npos;
       ++pos) {
    ++bars;
  }
  EXPECT_EQ(bars, 72u);
  for (const auto& c : charts) EXPECT_EQ(c.svg.rfind("<svg xmlns=", 0), 0u);
}

TEST(Charts, RadarGeometry) {
  const auto charts = emit_charts(table(1, 6, 5.0), "r");
  ASSERT_EQ(charts.size(), 2u);
  const auto pts = polygon_points(charts[1].svg);
  ASSERT_EQ(pts.size(), 6u);
  double cx = 0, cy = 0;
  const double R = outer_radius(charts[1].svg, &cx, &cy);
  ASSERT_GT(R, 0);
  for (const auto& [x, y] : pts) EXPECT_NEAR(std::hypot(x - cx, y - cy), R, 0.02);
}

TEST(Charts, MinimumSitsAtCentre) {
  const auto charts = emit_charts(table(1, 4, 1.0), "r");
  double cx = 0, cy = 0;
  outer_radius(charts[1].svg, &cx, &cy);
  for (const auto& [x, y] : polygon_points(charts[1].svg)) {
    EXPECT_NEAR(std::hypot(x - cx, y - cy), 0.0, 0.02);
  }
}

TEST(Charts, DuplicateLabelsGetDistinctFiles) {
  ReportTable t = table(2, 3, 3.0);
  t.rows[1].label = t.rows[0].label;
  const auto charts = emit_charts(t, "r");
  EXPECT_NE(charts[1].filename, charts[2].filename);
}

TEST(Charts, EmptyTableThrows) {
  EXPECT_THROW(emit_charts(ReportTable{}, "r"), ReportError);
}

}  // namespace
}  // namespace elmes
