#include "elmes/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "elmes/graph.hpp"

namespace elmes {
namespace {

using Kind = ConfigError::Kind;

[[noreturn]] void fail(Kind kind, const std::string& what) {
  throw ConfigError(kind, what);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void require_map(const YAML::Node& node, const std::string& path) {
  if (!node.IsMap()) fail(Kind::kInvalidValue, path + " must be a mapping");
}

void require_keys(const YAML::Node& node, const std::string& path,
                  std::initializer_list<std::string_view> allowed) {
  require_map(node, path);
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(Kind::kUnknownKey, "unknown key '" + join(path, key) + "'");
    }
  }
}

std::string scalar(const YAML::Node& node, const std::string& path) {
  if (!node || node.IsNull()) return {};
  if (!node.IsScalar()) fail(Kind::kInvalidValue, path + " must be a scalar");
  return node.Scalar();
}

std::string required_scalar(const YAML::Node& parent, const std::string& key,
                            const std::string& path) {
  const YAML::Node node = parent[key];
  if (!node || node.IsNull()) {
    fail(Kind::kInvalidValue, join(path, key) + " is required");
  }
  return scalar(node, join(path, key));
}

long long integer(const YAML::Node& node, const std::string& path) {
  try {
    return node.as<long long>();
  } catch (const YAML::Exception&) {
    fail(Kind::kInvalidValue, path + " must be an integer");
  }
}

int positive_int(const YAML::Node& node, const std::string& path) {
  const long long v = integer(node, path);
  if (v < 1 || v > 1'000'000) {
    fail(Kind::kInvalidValue, path + " must be a positive integer");
  }
  return static_cast<int>(v);
}

PromptTemplate parse_template(const YAML::Node& node, const std::string& path) {
  require_keys(node, path, {"role", "content"});
  PromptTemplate t;
  const std::string role = required_scalar(node, "role", path);
  const auto parsed = parse_role(role);
  if (!parsed) {
    fail(Kind::kInvalidValue, join(path, "role") + " must be one of "
                                  "system, user, assistant (got '" + role + "')");
  }
  t.role = *parsed;
  t.content = scalar(node["content"], join(path, "content"));
  return t;
}

std::vector<PromptTemplate> parse_prompt_list(const YAML::Node& node,
                                              const std::string& path) {
  if (!node || !node.IsSequence() || node.size() == 0) {
    fail(Kind::kInvalidValue, path + " must be a non-empty list of templates");
  }
  std::vector<PromptTemplate> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    out.push_back(parse_template(node[i], path + "[" + std::to_string(i) + "]"));
  }
  const auto systems = std::count_if(out.begin(), out.end(), [](const auto& t) {
    return t.role == Role::kSystem;
  });
  if (systems > 1 || (systems == 1 && out.front().role != Role::kSystem)) {
    fail(Kind::kInvalidValue,
         path + " allows at most one system template, and only in first position");
  }
  return out;
}

nlohmann::ordered_json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Map: {
      auto obj = nlohmann::ordered_json::object();
      for (const auto& kv : node) {
        obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      }
      return obj;
    }
    case YAML::NodeType::Sequence: {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Scalar: {
      const std::string& s = node.Scalar();
      if (node.Tag() != "!") {  // plain scalars may be typed
        long long i = 0;
        double d = 0;
        bool b = false;
        if (YAML::convert<long long>::decode(node, i)) return i;
        if (YAML::convert<double>::decode(node, d)) return d;
        if (YAML::convert<bool>::decode(node, b)) return b;
        if (s == "null" || s == "~") return nullptr;
      }
      return s;
    }
    default:
      return nullptr;
  }
}

ScriptEntry parse_script_entry(const YAML::Node& node, const std::string& path) {
  ScriptEntry e;
  if (node.IsScalar()) {
    e.text = node.Scalar();
    return e;
  }
  require_keys(node, path, {"text", "tool_call", "error"});
  e.text = scalar(node["text"], join(path, "text"));
  if (const auto call = node["tool_call"]) {
    require_keys(call, join(path, "tool_call"), {"name", "arguments"});
    e.tool_name = required_scalar(call, "name", join(path, "tool_call"));
    e.tool_arguments = call["arguments"] ? yaml_to_json(call["arguments"])
                                         : nlohmann::ordered_json::object();
  }
  if (const auto err = node["error"]) {
    e.error_status = static_cast<int>(integer(err, join(path, "error")));
  }
  return e;
}

ModelConfig parse_model(const std::string& id, const YAML::Node& node) {
  const std::string path = "models." + id;
  if (node.IsNull()) fail(Kind::kInvalidValue, path + " must not be empty");
  require_keys(node, path,
               {"type", "base_url", "api_key", "model", "sampling", "script"});
  ModelConfig m;
  m.id = id;
  const std::string type = scalar(node["type"], join(path, "type"));
  if (type.empty() || type == "openai" || type == "openai-compatible") {
    m.provider = ProviderKind::kOpenAiCompatible;
  } else if (type == "scripted" || type == "scripted-mock" || type == "mock") {
    m.provider = ProviderKind::kScriptedMock;
  } else {
    fail(Kind::kInvalidValue, join(path, "type") + ": unknown provider '" +
                                  type + "'");
  }
  m.base_url = scalar(node["base_url"], join(path, "base_url"));
  m.api_key_ref = scalar(node["api_key"], join(path, "api_key"));
  m.model_name = scalar(node["model"], join(path, "model"));

  if (const auto s = node["sampling"]) {
    require_keys(s, join(path, "sampling"), {"temperature", "max_tokens"});
    if (s["temperature"]) {
      try {
        m.sampling.temperature = s["temperature"].as<double>();
      } catch (const YAML::Exception&) {
        fail(Kind::kInvalidValue, path + ".sampling.temperature must be a number");
      }
    }
    if (s["max_tokens"]) {
      m.sampling.max_tokens =
          positive_int(s["max_tokens"], path + ".sampling.max_tokens");
    }
  }

  if (const auto script = node["script"]) {
    if (!script.IsSequence()) {
      fail(Kind::kInvalidValue, join(path, "script") + " must be a list");
    }
    for (std::size_t i = 0; i < script.size(); ++i) {
      m.script.push_back(parse_script_entry(
          script[i], path + ".script[" + std::to_string(i) + "]"));
    }
  }

  if (m.provider == ProviderKind::kOpenAiCompatible) {
    if (m.model_name.empty()) {
      fail(Kind::kInvalidValue, join(path, "model") +
                                    " is required for openai-compatible models");
    }
    if (m.base_url.empty()) m.base_url = "https://api.openai.com/v1";
  } else if (m.script.empty()) {
    fail(Kind::kInvalidValue,
         join(path, "script") + " must contain at least one entry");
  }
  return m;
}

AgentSpec parse_agent(const std::string& id, const YAML::Node& node) {
  const std::string path = "agents." + id;
  require_keys(node, path, {"model", "prompt", "memory"});
  AgentSpec a;
  a.id = id;
  a.model = required_scalar(node, "model", path);
  a.prompt = parse_prompt_list(node["prompt"], join(path, "prompt"));
  if (const auto mem = node["memory"]) {
    require_keys(mem, join(path, "memory"), {"keep_turns"});
    if (!mem["keep_turns"]) {
      fail(Kind::kInvalidValue, path + ".memory.keep_turns is required");
    }
    a.memory = MemoryPolicy{
        positive_int(mem["keep_turns"], path + ".memory.keep_turns")};
  }
  return a;
}

TaskSpec parse_tasks(const YAML::Node& node) {
  require_keys(node, "tasks", {"start_prompt", "mode", "content"});
  TaskSpec t;
  if (const auto sp = node["start_prompt"]) {
    t.start_prompt = parse_template(sp, "tasks.start_prompt");
  }
  const std::string mode = scalar(node["mode"], "tasks.mode");
  if (mode.empty() || mode == "union") {
    t.mode = TaskMode::kUnion;
  } else if (mode == "cartesian") {
    t.mode = TaskMode::kCartesian;
  } else {
    fail(Kind::kInvalidValue,
         "tasks.mode must be 'union' or 'cartesian' (got '" + mode + "')");
  }

  const YAML::Node content = node["content"];
  if (!content || content.IsNull() || (content.IsMap() && content.size() == 0)) {
    fail(Kind::kInvalidValue, "tasks.content must define at least one variable");
  }
  require_map(content, "tasks.content");
  for (const auto& kv : content) {
    TaskVariable var;
    var.name = kv.first.as<std::string>();
    const std::string path = "tasks.content." + var.name;
    if (var.name.empty() ||
        !std::all_of(var.name.begin(), var.name.end(), [](char c) {
          return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
        })) {
      fail(Kind::kInvalidValue, path + ": variable names must be identifiers");
    }
    const YAML::Node values = kv.second;
    if (!values.IsSequence() || values.size() == 0) {
      fail(Kind::kInvalidValue, path + " must be a non-empty list");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      var.values.push_back(
          scalar(values[i], path + "[" + std::to_string(i) + "]"));
    }
    t.content.push_back(std::move(var));
  }

  std::set<std::string> names;
  for (const auto& v : t.content) {
    if (!names.insert(v.name).second) {
      fail(Kind::kInvalidValue, "tasks.content defines '" + v.name + "' twice");
    }
  }
  if (t.mode == TaskMode::kUnion) {
    const auto& first = t.content.front();
    for (const auto& v : t.content) {
      if (v.values.size() != first.values.size()) {
        fail(Kind::kInvalidValue,
             "tasks.mode union requires equal list lengths: '" + first.name +
                 "' has " + std::to_string(first.values.size()) + " values but '" +
                 v.name + "' has " + std::to_string(v.values.size()));
      }
    }
  }
  return t;
}

MetricType parse_metric_type(const std::string& text, const std::string& path) {
  if (text == "int") return MetricType::kInt;
  if (text == "float") return MetricType::kFloat;
  if (text == "str") return MetricType::kStr;
  if (text == "bool") return MetricType::kBool;
  fail(Kind::kInvalidValue,
       path + " must be one of int, float, str, bool (got '" + text + "')");
}

bool valid_field_name(std::string_view name) {
  if (name.empty()) return false;
  if (std::isspace(static_cast<unsigned char>(name.front())) ||
      std::isspace(static_cast<unsigned char>(name.back())))
    return false;
  return std::none_of(name.begin(), name.end(), [](char c) {
    return std::iscntrl(static_cast<unsigned char>(c));
  });
}

bool filesystem_safe(std::string_view name) {
  if (name.empty() || name == "." || name == "..") return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '-' || c == '.';
  });
}

EvaluationSpec parse_evaluation(const YAML::Node& node) {
  require_keys(node, "evaluation",
               {"model", "name", "prompt", "format", "format_mode", "keywords"});
  EvaluationSpec e;
  e.model = required_scalar(node, "model", "evaluation");
  e.name = required_scalar(node, "name", "evaluation");
  if (!filesystem_safe(e.name)) {
    fail(Kind::kInvalidValue,
         "evaluation.name '" + e.name +
             "' must be filesystem-safe (letters, digits, '_', '-', '.')");
  }
  e.prompt = parse_prompt_list(node["prompt"], "evaluation.prompt");

  const YAML::Node format = node["format"];
  if (!format || !format.IsSequence() || format.size() == 0) {
    fail(Kind::kInvalidValue, "evaluation.format must be a non-empty list");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < format.size(); ++i) {
    const std::string path = "evaluation.format[" + std::to_string(i) + "]";
    require_keys(format[i], path, {"field", "type", "description"});
    MetricField f;
    f.name = required_scalar(format[i], "field", path);
    if (!valid_field_name(f.name)) {
      fail(Kind::kInvalidValue, path + ".field '" + f.name + "' is not a valid name");
    }
    if (!names.insert(f.name).second) {
      fail(Kind::kInvalidValue, "evaluation.format field '" + f.name +
                                    "' is declared twice");
    }
    f.type = parse_metric_type(required_scalar(format[i], "type", path),
                               path + ".type");
    f.description = scalar(format[i]["description"], path + ".description");
    e.format.push_back(std::move(f));
  }

  const std::string mode = scalar(node["format_mode"], "evaluation.format_mode");
  if (mode.empty() || mode == "prompt") {
    e.format_mode = FormatMode::kPrompt;
  } else if (mode == "tool") {
    e.format_mode = FormatMode::kTool;
  } else {
    fail(Kind::kInvalidValue,
         "evaluation.format_mode must be 'prompt' or 'tool' (got '" + mode + "')");
  }

  if (const auto kw = node["keywords"]) {
    if (!kw.IsSequence()) {
      fail(Kind::kInvalidValue, "evaluation.keywords must be a list");
    }
    for (const auto& k : kw) e.keywords.push_back(scalar(k, "evaluation.keywords"));
  }
  return e;
}

RunLimits parse_limits(const YAML::Node& node) {
  RunLimits l;
  if (!node || node.IsNull()) return l;
  require_keys(node, "limits",
               {"max_turns", "concurrency", "request_timeout", "max_attempts"});
  if (node["max_turns"]) l.max_turns = positive_int(node["max_turns"], "limits.max_turns");
  if (node["concurrency"]) {
    l.concurrency = positive_int(node["concurrency"], "limits.concurrency");
  }
  if (node["request_timeout"]) {
    l.request_timeout = std::chrono::seconds(
        positive_int(node["request_timeout"], "limits.request_timeout"));
  }
  if (node["max_attempts"]) {
    l.max_attempts = positive_int(node["max_attempts"], "limits.max_attempts");
  }
  return l;
}

void check_placeholders(const std::vector<PromptTemplate>& prompts,
                        const std::set<std::string>& bound,
                        const std::string& path) {
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    for (const auto& p : find_placeholders(prompts[i].content)) {
      if (bound.count(p.name) == 0) {
        fail(Kind::kTemplate, path + "[" + std::to_string(i) +
                                  "]: unbound placeholder {" + p.name +
                                  "} at offset " + std::to_string(p.offset));
      }
    }
  }
}

void validate(const ExperimentConfig& cfg) {
  std::set<std::string> model_ids;
  for (const auto& m : cfg.models) {
    if (!model_ids.insert(m.id).second) {
      fail(Kind::kInvalidValue, "model id '" + m.id + "' is declared twice");
    }
  }
  for (const auto& a : cfg.agents) {
    if (model_ids.count(a.model) == 0) {
      fail(Kind::kCrossReference, "agents." + a.id +
                                      ".model references undefined model '" +
                                      a.model + "'");
    }
  }
  if (model_ids.count(cfg.evaluation.model) == 0) {
    fail(Kind::kCrossReference, "evaluation.model references undefined model '" +
                                    cfg.evaluation.model + "'");
  }

  std::set<std::string> task_names;
  for (const auto& v : cfg.tasks.content) {
    task_names.insert(v.name);
    task_names.insert("task." + v.name);
  }
  for (const auto& a : cfg.agents) {
    check_placeholders(a.prompt, task_names, "agents." + a.id + ".prompt");
  }
  check_placeholders({cfg.tasks.start_prompt}, task_names, "tasks.start_prompt");
  auto judge_names = task_names;
  judge_names.insert(std::string(kDialogPlaceholder));
  check_placeholders(cfg.evaluation.prompt, judge_names, "evaluation.prompt");

  try {
    (void)build_graph(cfg.agents, cfg.directions);
  } catch (const GraphError& e) {
    fail(Kind::kDirection, e.what());
  }
}

}  // namespace

std::string_view to_string(ProviderKind kind) noexcept {
  return kind == ProviderKind::kOpenAiCompatible ? "openai-compatible"
                                                 : "scripted-mock";
}

std::string_view to_string(MetricType type) noexcept {
  switch (type) {
    case MetricType::kInt:
      return "int";
    case MetricType::kFloat:
      return "float";
    case MetricType::kStr:
      return "str";
    case MetricType::kBool:
      return "bool";
  }
  return "str";
}

const char* to_string(ConfigError::Kind kind) noexcept {
  switch (kind) {
    case Kind::kSyntax:
      return "syntax";
    case Kind::kUnknownKey:
      return "unknown-key";
    case Kind::kMissingSection:
      return "missing-section";
    case Kind::kCrossReference:
      return "cross-reference";
    case Kind::kInvalidValue:
      return "invalid-value";
    case Kind::kTemplate:
      return "template";
    case Kind::kDirection:
      return "direction";
  }
  return "unknown";
}

const ModelConfig* ExperimentConfig::find_model(std::string_view id) const noexcept {
  const auto it = std::find_if(models.begin(), models.end(),
                               [&](const auto& m) { return m.id == id; });
  return it == models.end() ? nullptr : &*it;
}

const AgentSpec* ExperimentConfig::find_agent(std::string_view id) const noexcept {
  const auto it = std::find_if(agents.begin(), agents.end(),
                               [&](const auto& a) { return a.id == id; });
  return it == agents.end() ? nullptr : &*it;
}

ExperimentConfig parse_config(std::string_view source_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(source_text));
  } catch (const YAML::ParserException& e) {
    fail(Kind::kSyntax, "syntax error at line " + std::to_string(e.mark.line + 1) +
                            ", column " + std::to_string(e.mark.column + 1) +
                            ": " + e.msg);
  }
  if (!root.IsMap()) {
    fail(Kind::kSyntax, "config root must be a mapping of sections");
  }

  try {
    require_keys(root, "", {"models", "agents", "tasks", "directions",
                            "evaluation", "limits"});
    for (const char* section :
         {"models", "agents", "tasks", "directions", "evaluation"}) {
      if (!root[section] || root[section].IsNull()) {
        fail(Kind::kMissingSection,
             std::string("missing required section '") + section + "'");
      }
    }

    ExperimentConfig cfg;
    require_map(root["models"], "models");
    for (const auto& kv : root["models"]) {
      cfg.models.push_back(parse_model(kv.first.as<std::string>(), kv.second));
    }
    require_map(root["agents"], "agents");
    for (const auto& kv : root["agents"]) {
      cfg.agents.push_back(parse_agent(kv.first.as<std::string>(), kv.second));
    }
    cfg.tasks = parse_tasks(root["tasks"]);

    const YAML::Node dirs = root["directions"];
    if (!dirs.IsSequence() || dirs.size() == 0) {
      fail(Kind::kInvalidValue, "directions must be a non-empty list");
    }
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      cfg.directions.push_back(
          scalar(dirs[i], "directions[" + std::to_string(i) + "]"));
    }

    cfg.evaluation = parse_evaluation(root["evaluation"]);
    cfg.limits = parse_limits(root["limits"]);
    validate(cfg);
    return cfg;
  } catch (const YAML::Exception& e) {
    fail(Kind::kInvalidValue, std::string("invalid config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(Kind::kSyntax, "cannot read config file '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// --- task expansion -------------------------------------------------------

namespace {

std::uint32_t fnv1a(std::string_view data) {
  std::uint32_t h = 2166136261u;
  for (const unsigned char c : data) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

std::string case_id_for(std::string_view run_name, std::size_t index,
                        std::size_t total, const Bindings& bindings) {
  std::string canon;
  for (const auto& [k, v] : bindings) {
    canon += k;
    canon.push_back('\0');
    canon += v;
    canon.push_back('\0');
  }
  const int width =
      std::max<int>(4, static_cast<int>(std::to_string(total == 0 ? 0 : total - 1).size()));
  std::string idx = std::to_string(index);
  if (idx.size() < static_cast<std::size_t>(width)) idx.insert(0, width - idx.size(), '0');
  char digest[16];
  std::snprintf(digest, sizeof digest, "%08x", static_cast<unsigned>(fnv1a(canon)));
  return std::string(run_name) + "/" + idx + "-" + digest;
}

}  // namespace

std::vector<TestCase> expand_tasks(const TaskSpec& spec,
                                   std::string_view run_name) {
  if (spec.content.empty()) {
    fail(Kind::kInvalidValue, "tasks.content must define at least one variable");
  }
  for (const auto& v : spec.content) {
    if (v.values.empty()) {
      fail(Kind::kInvalidValue, "tasks.content." + v.name + " must be non-empty");
    }
  }

  std::vector<Bindings> rows;
  if (spec.mode == TaskMode::kUnion) {
    const std::size_t n = spec.content.front().values.size();
    for (const auto& v : spec.content) {
      if (v.values.size() != n) {
        fail(Kind::kInvalidValue,
             "tasks.mode union requires equal list lengths: '" +
                 spec.content.front().name + "' has " + std::to_string(n) +
                 " values but '" + v.name + "' has " +
                 std::to_string(v.values.size()));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      Bindings b;
      for (const auto& v : spec.content) b[v.name] = v.values[i];
      rows.push_back(std::move(b));
    }
  } else {
    std::vector<const TaskVariable*> vars;
    for (const auto& v : spec.content) vars.push_back(&v);
    std::sort(vars.begin(), vars.end(),
              [](const auto* a, const auto* b) { return a->name < b->name; });
    std::vector<std::size_t> idx(vars.size(), 0);
    for (;;) {
      Bindings b;
      for (std::size_t k = 0; k < vars.size(); ++k) {
        b[vars[k]->name] = vars[k]->values[idx[k]];
      }
      rows.push_back(std::move(b));
      // odometer, last variable fastest
      std::size_t k = vars.size();
      while (k > 0) {
        --k;
        if (++idx[k] < vars[k]->values.size()) break;
        idx[k] = 0;
        if (k == 0) {
          k = vars.size() + 1;
          break;
        }
      }
      if (k == vars.size() + 1) break;
    }
  }

  std::vector<TestCase> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back({case_id_for(run_name, i, rows.size(), rows[i]), i,
                   std::move(rows[i])});
  }
  return out;
}

}  // namespace elmes
