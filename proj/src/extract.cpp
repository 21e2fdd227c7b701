#include <algorithm>
#include <set>

#include "elmes/judge.hpp"

namespace elmes {
namespace {

using json = nlohmann::ordered_json;

struct Candidate {
  std::size_t begin;
  std::size_t end;
  std::string_view text;
};

// Contents of ``` fences. The opening fence may carry a language tag.
void fenced_blocks(std::string_view text, std::vector<Candidate>& out) {
  std::size_t pos = 0;
  for (;;) {
    const std::size_t open = text.find("```", pos);
    if (open == std::string_view::npos) return;
    std::size_t body = text.find('\n', open + 3);
    if (body == std::string_view::npos) return;
    ++body;
    const std::size_t close = text.find("```", body);
    if (close == std::string_view::npos) return;
    out.push_back({body, close, text.substr(body, close - body)});
    pos = close + 3;
  }
}

// Top-level `{...}` spans, ignoring braces inside JSON strings.
void balanced_objects(std::string_view text, std::vector<Candidate>& out) {
  std::size_t start = 0;
  while ((start = text.find('{', start)) != std::string_view::npos) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    std::size_t i = start;
    for (; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        break;
      }
    }
    if (i < text.size()) {
      out.push_back({start, i + 1, text.substr(start, i + 1 - start)});
      start = i + 1;
    } else {
      ++start;  // unbalanced; retry from the next brace
    }
  }
}

const char* json_type_name(std::string_view schema_type) {
  if (schema_type == "integer") return "an integer";
  if (schema_type == "number") return "a number";
  if (schema_type == "boolean") return "a boolean";
  return "a string";
}

bool has_type(const json& v, std::string_view type) {
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "string") return v.is_string();
  return false;
}

}  // namespace

SchemaDoc schema_from_format(std::span<const MetricField> fields) {
  if (fields.empty()) {
    throw JudgeError(JudgeError::Kind::kInvalidFormat,
                     "evaluation format must declare at least one field");
  }
  std::set<std::string_view> seen;
  for (const MetricField& f : fields) {
    if (f.name.empty()) {
      throw JudgeError(JudgeError::Kind::kInvalidFormat, "empty field name");
    }
    if (!seen.insert(f.name).second) {
      throw JudgeError(JudgeError::Kind::kInvalidFormat,
                       "field '" + f.name + "' is declared twice", f.name);
    }
  }

  json properties = json::object();
  json required = json::array();
  for (const MetricField& f : fields) {
    json prop;
    switch (f.type) {
      case MetricType::kInt:
        prop["type"] = "integer";
        break;
      case MetricType::kFloat:
        prop["type"] = "number";
        break;
      case MetricType::kStr:
        prop["type"] = "string";
        break;
      case MetricType::kBool:
        prop["type"] = "boolean";
        break;
    }
    prop["description"] = f.description;
    if (f.type == MetricType::kInt) {
      prop["minimum"] = kLikertMin;
      prop["maximum"] = kLikertMax;
    }
    properties[f.name] = std::move(prop);
    required.push_back(f.name);
  }
  json schema;
  schema["title"] = "Evaluation";
  schema["type"] = "object";
  schema["properties"] = std::move(properties);
  schema["required"] = std::move(required);
  schema["additionalProperties"] = false;
  return schema;
}

std::optional<SchemaViolation> validate_against(const json& value,
                                                const SchemaDoc& schema) {
  if (!value.is_object()) return SchemaViolation{"", "expected a JSON object"};
  const json& props = schema.at("properties");
  for (const auto& name : schema.at("required")) {
    const auto key = name.get<std::string>();
    if (!value.contains(key)) {
      return SchemaViolation{key, "missing required field '" + key + "'"};
    }
  }
  for (const auto& [key, spec] : props.items()) {
    if (!value.contains(key)) continue;
    const json& v = value.at(key);
    const auto type = spec.at("type").get<std::string>();
    if (!has_type(v, type)) {
      return SchemaViolation{key, "field '" + key + "' must be " +
                                      json_type_name(type) + ", got " + v.dump()};
    }
    if (type == "integer" && spec.contains("minimum")) {
      const auto n = v.get<long long>();
      const auto lo = spec.at("minimum").get<long long>();
      const auto hi = spec.at("maximum").get<long long>();
      if (n < lo || n > hi) {
        return SchemaViolation{key, "field '" + key + "' = " + std::to_string(n) +
                                        " is outside the range [" +
                                        std::to_string(lo) + ", " +
                                        std::to_string(hi) + "]"};
      }
    }
  }
  if (!schema.value("additionalProperties", true)) {
    for (const auto& [key, v] : value.items()) {
      if (!props.contains(key)) {
        return SchemaViolation{key, "unexpected field '" + key + "'"};
      }
    }
  }
  return std::nullopt;
}

nlohmann::ordered_json synthetic_example(const SchemaDoc& schema) {
  json out = json::object();
  for (const auto& [key, spec] : schema.at("properties").items()) {
    const auto type = spec.at("type").get<std::string>();
    if (type == "integer") {
      out[key] = 3;
    } else if (type == "number") {
      out[key] = 3.5;
    } else if (type == "boolean") {
      out[key] = true;
    } else {
      out[key] = "brief justification";
    }
  }
  return out;
}

nlohmann::ordered_json extract_structured(std::string_view reply_text,
                                          const SchemaDoc& schema) {
  std::vector<Candidate> candidates;
  fenced_blocks(reply_text, candidates);
  balanced_objects(reply_text, candidates);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.end != b.end ? a.end < b.end : a.begin < b.begin;
                   });

  std::optional<SchemaViolation> last_violation;
  for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
    json parsed = json::parse(it->text, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded() || !parsed.is_object()) continue;
    const auto violation = validate_against(parsed, schema);
    if (!violation) return parsed;
    if (!last_violation) last_violation = violation;
  }
  if (!last_violation) {
    throw JudgeError(JudgeError::Kind::kNoJson, "no JSON object found in reply");
  }
  throw JudgeError(JudgeError::Kind::kSchemaInvalid,
                   "JSON found but schema-invalid: " + last_violation->message,
                   last_violation->field);
}

}  // namespace elmes
