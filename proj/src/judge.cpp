#include "elmes/judge.hpp"

#include <algorithm>
#include <cctype>

#include "elmes/graph.hpp"

namespace elmes {
namespace {

using json = nlohmann::ordered_json;

std::string prompt_mode_suffix(const SchemaDoc& schema) {
  return "\n\nReturn your assessment as a single JSON object inside a ```json "
         "fenced code block. The object must conform to this JSON Schema:\n"
         "```json\n" +
         schema.dump(2) +
         "\n```\n\nExample of the expected format (values are placeholders):\n"
         "```json\n" +
         synthetic_example(schema).dump(2) + "\n```";
}

std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

std::size_t whitespace_tokens(std::string_view s) {
  std::size_t n = 0;
  bool in_token = false;
  for (const char c : s) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

std::vector<Message> build_judge_messages(const EvaluationSpec& spec,
                                          const DialogueRecord& record,
                                          const TestCase& test_case) {
  RenderContext ctx = RenderContext::for_bindings(test_case.bindings);
  ctx.with_dialog(as_dialog(record.messages));
  std::vector<Message> out;
  for (const PromptTemplate& t : spec.prompt) out.push_back(render_template(t, ctx));
  if (spec.format_mode == FormatMode::kPrompt && !out.empty()) {
    out.back().content += prompt_mode_suffix(schema_from_format(spec.format));
  }
  return out;
}

EvaluationResult evaluate_case(const EvaluationSpec& spec,
                               const ModelConfig& judge_model,
                               const DialogueRecord& record,
                               const TestCase& test_case, Gateway& gateway,
                               const JudgeOptions& options) {
  if (record.termination == Termination::kError && !options.judge_partial) {
    throw JudgeError(JudgeError::Kind::kPrecondition,
                     "case '" + record.case_id +
                         "' ended with an error; refusing to judge a partial dialogue");
  }
  const SchemaDoc schema = schema_from_format(spec.format);

  ChatRequest request;
  request.model = judge_model;
  request.session = record.case_id + "/judge:" + spec.name;
  request.messages = build_judge_messages(spec, record, test_case);
  if (spec.format_mode == FormatMode::kTool) {
    request.tools.push_back({std::string(kJudgeToolName),
                             "Record the rubric scores for the dialogue.", schema});
  }

  const int max_attempts = std::max(1, options.max_attempts);
  std::optional<JudgeError> last_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    const Completion reply = gateway.chat(request);
    try {
      json values;
      std::string raw;
      if (spec.format_mode == FormatMode::kTool) {
        if (!reply.tool_call) {
          throw JudgeError(JudgeError::Kind::kNoToolCall,
                           "judge reply carries no tool call");
        }
        raw = reply.tool_call->arguments.dump();
        if (const auto v = validate_against(reply.tool_call->arguments, schema)) {
          throw JudgeError(JudgeError::Kind::kSchemaInvalid,
                           "tool call arguments schema-invalid: " + v->message, v->field);
        }
        values = reply.tool_call->arguments;
      } else {
        raw = reply.text;
        values = extract_structured(reply.text, schema);
      }
      // Re-key in schema order so persisted rows follow the rubric.
      json ordered = json::object();
      for (const auto& [key, _] : schema.at("properties").items()) {
        ordered[key] = values.at(key);
      }
      return EvaluationResult{record.case_id, spec.name, std::move(ordered),
                              std::move(raw), attempt};
    } catch (const JudgeError& e) {
      last_error = e;
    }
  }
  throw JudgeError(last_error->kind(),
                   "case '" + record.case_id + "': judge failed after " +
                       std::to_string(max_attempts) + " attempts: " + last_error->what(),
                   last_error->field(), max_attempts);
}

ObjectiveReport objective_metrics(const DialogueRecord& record,
                                  std::span<const std::string> keywords) {
  ObjectiveReport report;
  std::string all;
  for (const AttributedMessage& m : record.messages) {
    LengthStats& agent = report.per_agent[m.agent];
    const std::size_t chars = utf8_length(m.content);
    const std::size_t tokens = whitespace_tokens(m.content);
    agent.messages += 1;
    agent.characters += chars;
    agent.tokens += tokens;
    report.total.messages += 1;
    report.total.characters += chars;
    report.total.tokens += tokens;
    all += casefold(m.content);
    all.push_back('\n');
  }
  for (const std::string& k : keywords) {
    report.keyword_hits.emplace_back(k, count_occurrences(all, casefold(k)));
  }
  return report;
}

nlohmann::ordered_json to_json(const ObjectiveReport& report) {
  auto stats = [](const LengthStats& s) {
    return json{{"messages", s.messages},
                {"characters", s.characters},
                {"tokens", s.tokens}};
  };
  json out;
  out["keyword_hits"] = json::object();
  for (const auto& [k, n] : report.keyword_hits) out["keyword_hits"][k] = n;
  out["per_agent"] = json::object();
  for (const auto& [agent, s] : report.per_agent) out["per_agent"][agent] = stats(s);
  out["total"] = stats(report.total);
  return out;
}

}  // namespace elmes
