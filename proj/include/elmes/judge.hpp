#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "elmes/config.hpp"
#include "elmes/error.hpp"
#include "elmes/gateway.hpp"
#include "elmes/transcript.hpp"
#include "json.hpp"

namespace elmes {

/// JSON Schema object with one required property per metric field, in field
/// order, and no additional properties. Int fields carry the 1-5 Likert
/// bounds.
using SchemaDoc = nlohmann::ordered_json;

inline constexpr int kLikertMin = 1;
inline constexpr int kLikertMax = 5;
inline constexpr std::string_view kJudgeToolName = "submit_evaluation";

class JudgeError : public Error {
 public:
  enum class Kind {
    kNoJson,         // nothing JSON-like in the reply
    kSchemaInvalid,  // JSON present but violates the schema
    kNoToolCall,     // tool mode reply without a function call
    kPrecondition,   // dialogue not eligible for judging
    kInvalidFormat,  // metric field list rejected
  };

  JudgeError(Kind kind, const std::string& what, std::string field = {},
             int attempts = 0)
      : Error(ErrorCategory::kEvaluation, what),
        kind_(kind),
        field_(std::move(field)),
        attempts_(attempts) {}

  Kind kind() const noexcept { return kind_; }
  /// Offending field for kSchemaInvalid, empty otherwise.
  const std::string& field() const noexcept { return field_; }
  int attempts() const noexcept { return attempts_; }

 private:
  Kind kind_;
  std::string field_;
  int attempts_;
};

SchemaDoc schema_from_format(std::span<const MetricField> fields);

struct SchemaViolation {
  std::string field;
  std::string message;
};

/// First violation of `value` against a schema built by schema_from_format.
std::optional<SchemaViolation> validate_against(const nlohmann::ordered_json& value,
                                                const SchemaDoc& schema);

/// A value set that satisfies the schema; shown to the judge in prompt mode.
nlohmann::ordered_json synthetic_example(const SchemaDoc& schema);

/// Scans `reply_text` for fenced code blocks and brace-balanced JSON
/// objects and returns the last candidate that validates. Types are never
/// coerced.
nlohmann::ordered_json extract_structured(std::string_view reply_text,
                                          const SchemaDoc& schema);

struct EvaluationResult {
  std::string case_id;
  std::string evaluator;
  nlohmann::ordered_json values;
  std::string raw_reply;
  int attempts = 0;
};

struct JudgeOptions {
  int max_attempts = 3;
  bool judge_partial = false;  // accept termination=error transcripts
};

/// Rendered judge prompt. In prompt mode the schema and an example are
/// appended to the last message.
std::vector<Message> build_judge_messages(const EvaluationSpec& spec,
                                          const DialogueRecord& record,
                                          const TestCase& test_case);

EvaluationResult evaluate_case(const EvaluationSpec& spec,
                               const ModelConfig& judge_model,
                               const DialogueRecord& record,
                               const TestCase& test_case, Gateway& gateway,
                               const JudgeOptions& options = {});

struct LengthStats {
  std::size_t messages = 0;
  std::size_t characters = 0;  // UTF-8 code points
  std::size_t tokens = 0;      // whitespace-separated

  friend bool operator==(const LengthStats&, const LengthStats&) = default;
};

struct ObjectiveReport {
  std::vector<std::pair<std::string, std::size_t>> keyword_hits;  // input order
  std::map<std::string, LengthStats> per_agent;
  LengthStats total;
};

/// Rule-based metrics: case-folded, non-overlapping keyword occurrence
/// counts over the whole transcript, and response lengths per agent.
ObjectiveReport objective_metrics(const DialogueRecord& record,
                                  std::span<const std::string> keywords);

nlohmann::ordered_json to_json(const ObjectiveReport& report);

}  // namespace elmes
