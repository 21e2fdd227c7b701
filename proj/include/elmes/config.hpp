#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "elmes/error.hpp"
#include "elmes/transcript.hpp"
#include "json.hpp"

namespace elmes {

enum class ProviderKind { kOpenAiCompatible, kScriptedMock };

std::string_view to_string(ProviderKind kind) noexcept;

struct Sampling {
  std::optional<double> temperature;
  std::optional<int> max_tokens;
};

/// One canned reply of a scripted model. `error_status` makes the call fail
/// as if the endpoint had answered with that HTTP status.
struct ScriptEntry {
  std::string text;
  std::optional<std::string> tool_name;
  std::optional<nlohmann::ordered_json> tool_arguments;
  std::optional<int> error_status;
};

struct ModelConfig {
  std::string id;
  ProviderKind provider = ProviderKind::kOpenAiCompatible;
  std::string base_url;
  // Literal key or "env:NAME". Resolved only when a request is sent.
  std::string api_key_ref;
  std::string model_name;
  Sampling sampling;
  std::vector<ScriptEntry> script;
};

struct PromptTemplate {
  Role role = Role::kSystem;
  std::string content;
};

struct MemoryPolicy {
  int keep_turns = 1;
};

struct AgentSpec {
  std::string id;
  std::string model;
  std::vector<PromptTemplate> prompt;
  std::optional<MemoryPolicy> memory;
};

enum class TaskMode { kUnion, kCartesian };

struct TaskVariable {
  std::string name;
  std::vector<std::string> values;
};

struct TaskSpec {
  PromptTemplate start_prompt{Role::kUser, ""};
  TaskMode mode = TaskMode::kUnion;
  std::vector<TaskVariable> content;  // declaration order
};

using Bindings = std::map<std::string, std::string, std::less<>>;

struct TestCase {
  std::string case_id;
  std::size_t index = 0;
  Bindings bindings;
};

enum class MetricType { kInt, kFloat, kStr, kBool };

std::string_view to_string(MetricType type) noexcept;

struct MetricField {
  std::string name;
  MetricType type = MetricType::kInt;
  std::string description;
};

enum class FormatMode { kPrompt, kTool };

struct EvaluationSpec {
  std::string model;
  std::string name;
  std::vector<PromptTemplate> prompt;
  std::vector<MetricField> format;
  FormatMode format_mode = FormatMode::kPrompt;
  // Objective metrics: keywords counted over each transcript.
  std::vector<std::string> keywords;
};

struct RunLimits {
  int max_turns = 20;
  int concurrency = 8;
  std::chrono::seconds request_timeout{120};
  int max_attempts = 3;
};

struct ExperimentConfig {
  std::vector<ModelConfig> models;
  std::vector<AgentSpec> agents;
  TaskSpec tasks;
  std::vector<std::string> directions;
  EvaluationSpec evaluation;
  RunLimits limits;

  const ModelConfig* find_model(std::string_view id) const noexcept;
  const AgentSpec* find_agent(std::string_view id) const noexcept;
};

/// Parses and validates an experiment file. Pure: no I/O beyond the text.
ExperimentConfig parse_config(std::string_view source_text);

ExperimentConfig load_config(const std::filesystem::path& path);

/// Expands task variables into concrete cases.
///
/// Union mode zips the i-th value of every variable into case i and requires
/// equal list lengths. Cartesian mode takes the full cross product with
/// variables ordered lexicographically by name, the first name varying
/// slowest. Case ids are `<run_name>/<index>-<digest>` where index is
/// zero-padded to at least four digits and digest is the 8-hex FNV-1a of the
/// sorted bindings.
std::vector<TestCase> expand_tasks(const TaskSpec& spec,
                                   std::string_view run_name);

// --- templates -----------------------------------------------------------

struct Placeholder {
  std::string name;
  std::size_t offset = 0;  // position of the opening brace
};

/// Placeholders recognised in `text`: `{ident}`, `{a.b}` and
/// `{messages.as_dialog()}`. Everything else, including `{{`/`}}` escapes,
/// is literal.
std::vector<Placeholder> find_placeholders(std::string_view text);

class RenderContext {
 public:
  RenderContext() = default;

  /// Binds every task variable both as `{name}` and as `{task.name}`.
  static RenderContext for_bindings(const Bindings& bindings);

  RenderContext& set(std::string key, std::string value);
  RenderContext& with_dialog(std::string dialog);

  const std::string* lookup(std::string_view key) const noexcept;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

inline constexpr std::string_view kDialogPlaceholder = "messages.as_dialog()";

std::string render_text(std::string_view text, const RenderContext& context);
Message render_template(const PromptTemplate& tmpl,
                        const RenderContext& context);

}  // namespace elmes
