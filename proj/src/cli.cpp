#include "elmes/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "elmes/config.hpp"
#include "elmes/graph.hpp"
#include "elmes/judge.hpp"
#include "elmes/orchestrator.hpp"
#include "elmes/report.hpp"
#include "elmes/store.hpp"

namespace elmes {
namespace fs = std::filesystem;
namespace {

struct Options {
  std::string config;
  std::string db;
  std::string out = ".";
  std::string name;
  std::string report;
  std::string label;
  int concurrency = 0;
  int max_turns = 0;
  bool fresh = false;
  bool verbose = false;
};

const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kRuntime: return "runtime";
    case ErrorCategory::kEvaluation: return "evaluation";
    case ErrorCategory::kInternal: break;
  }
  return "internal";
}

std::string run_name(const Options& o) {
  return o.name.empty() ? fs::path(o.config).stem().string() : o.name;
}

fs::path db_path(const Options& o) {
  if (!o.db.empty()) return o.db;
  return fs::path(o.config).parent_path() / (run_name(o) + ".db");
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << content;
  f.close();
  if (!f) throw Error(ErrorCategory::kRuntime, "cannot write " + path.string());
}

ExperimentConfig load(const Options& o) {
  ExperimentConfig config = load_config(o.config);
  if (o.concurrency > 0) config.limits.concurrency = o.concurrency;
  if (o.max_turns > 0) config.limits.max_turns = o.max_turns;
  return config;
}

Gateway make_gateway(const ExperimentConfig& config, const Options& o,
                     const CliEnv& env) {
  Gateway::Options options = Gateway::options_for(config);
  options.factory = env.factory;
  if (o.verbose) {
    auto mutex = std::make_shared<std::mutex>();
    options.log = [mutex, &err = env.err](std::string_view line) {
      std::lock_guard lock(*mutex);
      err << line << '\n';
    };
  }
  return Gateway(config.models, std::move(options));
}

// Opens the database of a run that must already exist.
std::unique_ptr<RunStore> open_existing(const Options& o) {
  const fs::path path = db_path(o);
  if (!fs::exists(path)) {
    throw StoreError(StoreError::Kind::kOpen,
                     "no run database at " + path.string() + "; run generate first");
  }
  return std::make_unique<RunStore>(path, run_name(o));
}

int cmd_generate(const Options& o, const CliEnv& env) {
  const ExperimentConfig config = load(o);
  const std::string name = run_name(o);
  const fs::path path = db_path(o);
  if (o.fresh) {
    for (const char* suffix : {"", "-wal", "-shm", "-journal"}) {
      fs::remove(path.string() + suffix);
    }
  }
  const std::vector<TestCase> cases = expand_tasks(config.tasks, name);
  const WorkflowGraph graph = build_graph(config.agents, config.directions);
  Gateway gateway = make_gateway(config, o, env);
  RunStore store(path, name);

  std::mutex mutex;
  const RunSummary summary = run_all(
      cases, config, graph, gateway, store,
      [&](const TestCase& c, const DialogueRecord& r) {
        std::lock_guard lock(mutex);
        env.out << c.case_id << ": " << to_string(r.termination) << " ("
                << r.messages.size() << " messages)";
        if (r.error_detail) env.out << ": " << *r.error_detail;
        env.out << '\n';
      });
  env.out << "generate: " << summary.completed << " completed, " << summary.failed
          << " failed, " << summary.skipped << " skipped in "
          << summary.wall_time.count() << " ms (peak in flight "
          << summary.peak_in_flight << ", limit " << config.limits.concurrency
          << ")\n"
          << "database: " << path.string() << '\n';
  if (summary.failed > 0) {
    throw Error(ErrorCategory::kRuntime,
                std::to_string(summary.failed) +
                    " case(s) failed; rerun generate to retry them");
  }
  return kExitOk;
}

int cmd_eval(const Options& o, const CliEnv& env) {
  const ExperimentConfig config = load(o);
  const EvaluationSpec& spec = config.evaluation;
  const ModelConfig* judge_model = config.find_model(spec.model);
  if (judge_model == nullptr) {
    throw ConfigError(ConfigError::Kind::kCrossReference,
                      "evaluation model '" + spec.model + "' is not defined");
  }
  const std::string name = run_name(o);
  auto store = open_existing(o);

  std::vector<CaseRow> complete;
  for (CaseRow& row : store->cases()) {
    if (row.status == CaseStatus::kComplete) complete.push_back(std::move(row));
  }
  if (complete.empty()) {
    throw StoreError(StoreError::Kind::kEmptyRun, "run has no complete cases to evaluate");
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < complete.size(); ++i) {
    if (!store->has_evaluation(complete[i].case_id, spec.name)) pending.push_back(i);
  }

  Gateway gateway = make_gateway(config, o, env);
  JudgeOptions judge_options;
  judge_options.max_attempts = std::max(1, config.limits.max_attempts);

  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  std::size_t judged = 0;
  std::vector<std::string> failures;
  std::optional<ErrorCategory> failure_category;
  auto worker = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) {
      const CaseRow& row = complete[pending[k]];
      try {
        const auto record = store->dialogue(row.case_id);
        const TestCase test_case{row.case_id, pending[k], row.bindings};
        const EvaluationResult result =
            evaluate_case(spec, *judge_model, *record, test_case, gateway, judge_options);
        store->save_evaluation(row.case_id, spec.name, result.values);
        std::lock_guard lock(mutex);
        ++judged;
        env.out << row.case_id << ": judged in " << result.attempts << " attempt(s)\n";
      } catch (const Error& e) {
        std::lock_guard lock(mutex);
        failures.push_back(row.case_id + ": " + e.what());
        if (!failure_category || e.category() == ErrorCategory::kRuntime) {
          failure_category = e.category();
        }
      }
    }
  };
  {
    const std::size_t n = std::min<std::size_t>(
        static_cast<std::size_t>(std::max(1, config.limits.concurrency)), pending.size());
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  }

  std::vector<EvaluationResult> results;
  nlohmann::ordered_json objective;
  objective["evaluator"] = spec.name;
  objective["cases"] = nlohmann::ordered_json::object();
  for (const CaseRow& row : complete) {
    const auto record = store->dialogue(row.case_id);
    objective["cases"][row.case_id] = to_json(objective_metrics(*record, spec.keywords));
    if (auto values = store->evaluation(row.case_id, spec.name)) {
      results.push_back({row.case_id, spec.name, std::move(*values), {}, 0});
    }
  }

  if (!results.empty()) {
    ReportTable table;
    table.fields = report_columns(spec.format);
    table.rows.push_back(aggregate(results, spec.format, o.label.empty() ? name : o.label));
    const fs::path csv = fs::path(o.out) / (name + "_report.csv");
    write_file(csv, to_csv(table));
    const fs::path obj = fs::path(o.out) / (name + "_objective.json");
    write_file(obj, objective.dump(2) + "\n");
    env.out << "eval: " << judged << " judged, " << (complete.size() - pending.size())
            << " already judged, " << failures.size() << " failed\n"
            << "report: " << csv.string() << " (AVG " << format_score(table.rows[0].avg)
            << " over " << results.size() << " cases)\n"
            << "objective metrics: " << obj.string() << '\n';
  }
  if (!failures.empty()) {
    for (const auto& f : failures) env.err << "elmes: " << f << '\n';
    throw Error(failure_category.value_or(ErrorCategory::kEvaluation),
                std::to_string(failures.size()) + " case(s) could not be judged");
  }
  return kExitOk;
}

int cmd_export(const Options& o, const std::string& format, const CliEnv& env) {
  const ExperimentConfig config = load(o);
  auto store = open_existing(o);
  const fs::path out(o.out);
  if (format == "json") {
    const fs::path file = out / (run_name(o) + ".json");
    write_file(file, store->export_json().dump(2) + "\n");
    env.out << "wrote " << file.string() << '\n';
  } else {
    const LabelStudioExport ls = export_label_studio(*store, config.evaluation);
    write_file(out / "label-studio.txt", ls.interface_text);
    write_file(out / "label-studio.json", ls.data.dump(2) + "\n");
    env.out << "wrote " << (out / "label-studio.txt").string() << " and "
            << (out / "label-studio.json").string() << " (" << ls.data.size()
            << " tasks)\n";
  }
  return kExitOk;
}

std::optional<fs::path> find_on_path(std::string_view program) {
  const char* path = std::getenv("PATH");
  if (path == nullptr) return std::nullopt;
  std::string_view rest(path);
  while (!rest.empty()) {
    const auto colon = rest.find(':');
    const std::string_view dir = rest.substr(0, colon);
    if (!dir.empty()) {
      std::error_code ec;
      const fs::path candidate = fs::path(dir) / program;
      const auto st = fs::status(candidate, ec);
      if (!ec && fs::is_regular_file(st) &&
          (st.permissions() & fs::perms::owner_exec) != fs::perms::none) {
        return candidate;
      }
    }
    if (colon == std::string_view::npos) break;
    rest.remove_prefix(colon + 1);
  }
  return std::nullopt;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (const char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  return out + "'";
}

int cmd_draw(const Options& o, const CliEnv& env) {
  const ExperimentConfig config = load(o);
  const WorkflowGraph graph = build_graph(config.agents, config.directions);
  const fs::path dot_file = fs::path(o.out) / (run_name(o) + ".dot");
  write_file(dot_file, to_dot(graph));
  env.out << "wrote " << dot_file.string() << '\n';
  if (const auto dot = find_on_path("dot")) {
    const fs::path svg = fs::path(dot_file).replace_extension(".svg");
    const std::string cmd = shell_quote(dot->string()) + " -Tsvg " +
                            shell_quote(dot_file.string()) + " -o " +
                            shell_quote(svg.string());
    if (std::system(cmd.c_str()) == 0) {
      env.out << "wrote " << svg.string() << '\n';
    } else {
      env.err << "elmes: dot failed; only the DOT file was written\n";
    }
  }
  return kExitOk;
}

int cmd_visualize(const Options& o, const CliEnv& env) {
  std::ifstream f(o.report, std::ios::binary);
  if (!f) throw Error(ErrorCategory::kRuntime, "cannot read report " + o.report);
  const std::string text((std::istreambuf_iterator<char>(f)), {});
  const ReportTable table = parse_report_csv(text);
  std::string name = o.name;
  if (name.empty()) {
    name = fs::path(o.report).stem().string();
    constexpr std::string_view suffix = "_report";
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      name.resize(name.size() - suffix.size());
    }
  }
  for (const ChartDocument& chart : emit_charts(table, name)) {
    const fs::path file = fs::path(o.out) / chart.filename;
    write_file(file, chart.svg);
    env.out << "wrote " << file.string() << '\n';
  }
  return kExitOk;
}

}  // namespace

int exit_code_for(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::kConfig: return kExitConfig;
    case ErrorCategory::kRuntime: return kExitRuntime;
    case ErrorCategory::kEvaluation: return kExitEvaluation;
    case ErrorCategory::kInternal: break;
  }
  return kExitInternal;
}

int dispatch(const std::vector<std::string>& args, const CliEnv& env) {
  Options o;
  std::string export_format;
  CLI::App app{"Configuration-driven educational dialogue simulation and evaluation",
               "elmes"};
  app.require_subcommand(1);

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "experiment YAML file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--db", o.db, "run database (default: <config dir>/<name>.db)");
    cmd->add_option("--name", o.name, "run name (default: config file stem)");
    cmd->add_flag("-v,--verbose", o.verbose, "log every model request");
  };

  CLI::App* generate = app.add_subcommand("generate", "run every test case");
  add_config(generate);
  generate->add_option("--concurrency", o.concurrency, "cases in flight")
      ->check(CLI::PositiveNumber);
  generate->add_option("--max-turns", o.max_turns, "activation limit per case")
      ->check(CLI::PositiveNumber);
  generate->add_flag("--fresh", o.fresh, "discard the existing run database");

  CLI::App* eval = app.add_subcommand("eval", "judge complete cases and write the report");
  add_config(eval);
  eval->add_option("--concurrency", o.concurrency, "judge calls in flight")
      ->check(CLI::PositiveNumber);
  eval->add_option("--out", o.out, "output directory")->capture_default_str();
  eval->add_option("--label", o.label, "report row label (default: run name)");

  CLI::App* exp = app.add_subcommand("export", "export transcripts");
  exp->require_subcommand(1);
  for (const char* fmt : {"json", "label-studio"}) {
    CLI::App* sub = exp->add_subcommand(fmt, std::string("write the ") + fmt + " export");
    add_config(sub);
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->callback([&export_format, fmt] { export_format = fmt; });
  }

  CLI::App* draw = app.add_subcommand("draw", "write the workflow graph as DOT");
  add_config(draw);
  draw->add_option("--out", o.out, "output directory")->capture_default_str();

  CLI::App* visualize = app.add_subcommand("visualize", "render charts from a report");
  visualize->add_option("--report", o.report, "report CSV")
      ->required()
      ->check(CLI::ExistingFile);
  visualize->add_option("--out", o.out, "output directory")->capture_default_str();
  visualize->add_option("--name", o.name, "chart file prefix (default: report stem)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, env.out, env.err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(o, env);
    if (eval->parsed()) return cmd_eval(o, env);
    if (exp->parsed()) return cmd_export(o, export_format, env);
    if (draw->parsed()) return cmd_draw(o, env);
    if (visualize->parsed()) return cmd_visualize(o, env);
  } catch (const Error& e) {
    env.err << "elmes: " << category_name(e.category()) << " error: " << e.what() << '\n';
    return exit_code_for(e.category());
  } catch (const fs::filesystem_error& e) {
    env.err << "elmes: runtime error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    env.err << "elmes: internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  env.err << "elmes: no command given\n";
  return kExitUsage;
}

int dispatch(int argc, const char* const* argv, const CliEnv& env) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, env);
}

}  // namespace elmes
