#include "elmes/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <thread>

namespace elmes {

using json = nlohmann::ordered_json;

nlohmann::ordered_json build_chat_body(const ChatRequest& request) {
  json body;
  body["model"] = request.model.model_name;
  auto& messages = body["messages"] = json::array();
  for (const Message& m : request.messages) {
    messages.push_back({{"role", std::string(to_string(m.role))},
                        {"content", m.content}});
  }
  if (request.model.sampling.temperature) {
    body["temperature"] = *request.model.sampling.temperature;
  }
  if (request.model.sampling.max_tokens) {
    body["max_tokens"] = *request.model.sampling.max_tokens;
  }
  if (!request.tools.empty()) {
    auto& tools = body["tools"] = json::array();
    for (const ToolDecl& t : request.tools) {
      tools.push_back({{"type", "function"},
                       {"function",
                        {{"name", t.name},
                         {"description", t.description},
                         {"parameters", t.parameters}}}});
    }
    if (request.tools.size() == 1) {
      body["tool_choice"] = {{"type", "function"},
                             {"function", {{"name", request.tools[0].name}}}};
    }
  }
  return body;
}

Completion parse_chat_response(std::string_view body) {
  const auto malformed = [&](const std::string& why) {
    return GatewayError(GatewayError::Kind::kMalformed,
                        "malformed chat-completions response: " + why, 200,
                        std::string(body.substr(0, 200)));
  };
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw malformed(e.what());
  }
  if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array() ||
      doc["choices"].empty()) {
    throw malformed("missing choices");
  }
  const json& choice = doc["choices"][0];
  if (!choice.is_object() || !choice.contains("message") ||
      !choice["message"].is_object()) {
    throw malformed("missing choices[0].message");
  }
  const json& message = choice["message"];

  Completion c;
  if (message.contains("content") && message["content"].is_string()) {
    c.text = message["content"].get<std::string>();
  }
  if (message.contains("tool_calls") && message["tool_calls"].is_array() &&
      !message["tool_calls"].empty()) {
    const json& call = message["tool_calls"][0];
    if (!call.contains("function") || !call["function"].is_object()) {
      throw malformed("tool call without function");
    }
    const json& fn = call["function"];
    ToolCall tc;
    tc.name = fn.value("name", "");
    const json& args = fn.contains("arguments") ? fn["arguments"] : json();
    if (args.is_string()) {
      try {
        tc.arguments = json::parse(args.get<std::string>());
      } catch (const json::parse_error& e) {
        throw malformed(std::string("tool call arguments are not JSON: ") + e.what());
      }
    } else if (args.is_object()) {
      tc.arguments = args;
    } else {
      throw malformed("tool call arguments missing");
    }
    c.tool_call = std::move(tc);
    c.text.clear();
  }
  if (doc.contains("usage") && doc["usage"].is_object()) {
    const json& u = doc["usage"];
    c.usage = Usage{u.value("prompt_tokens", 0), u.value("completion_tokens", 0),
                    u.value("total_tokens", 0)};
  }
  return c;
}

std::string resolve_api_key(const ModelConfig& model) {
  const std::string& ref = model.api_key_ref;
  if (ref.rfind("env:", 0) == 0) {
    const std::string var = ref.substr(4);
    const char* value = std::getenv(var.c_str());
    if (value == nullptr || *value == '\0') {
      throw GatewayError(GatewayError::Kind::kCredential,
                         "model '" + model.id + "': environment variable '" + var +
                             "' holding the API key is not set");
    }
    return value;
  }
  if (ref.empty()) {
    throw GatewayError(GatewayError::Kind::kCredential,
                       "model '" + model.id + "': no api_key configured");
  }
  return ref;
}

std::chrono::milliseconds backoff_cap(const RetryPolicy& policy, int attempt) {
  const auto base = policy.base_delay.count();
  const auto cap = policy.max_delay.count();
  long long delay = base;
  for (int i = 1; i < attempt && delay < cap; ++i) delay *= 2;
  return std::chrono::milliseconds(std::min<long long>(delay, cap));
}

Completion chat_with_retry(ChatProvider& provider, const ChatRequest& request,
                           const RetryPolicy& policy, const LogFn& log) {
  const int max_attempts = std::max(1, policy.max_attempts);
  std::mt19937_64 rng(policy.seed ? *policy.seed : std::random_device{}());
  std::vector<std::string> causes;
  int last_status = 0;

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    try {
      Completion c = provider.complete(request);
      c.attempts = attempt;
      return c;
    } catch (const GatewayError& e) {
      if (log) {
        log("model=" + request.model.id + " attempt=" + std::to_string(attempt) +
            " failed: " + e.what());
      }
      if (!e.retryable()) throw;
      causes.push_back(e.what());
      last_status = e.status();
    }
    if (attempt < max_attempts) {
      const auto cap = backoff_cap(policy, attempt);
      std::uniform_int_distribution<long long> jitter(0, cap.count());
      const std::chrono::milliseconds delay(jitter(rng));
      if (policy.sleep) {
        policy.sleep(delay);
      } else {
        std::this_thread::sleep_for(delay);
      }
    }
  }

  std::string what = "model '" + request.model.id + "': all " +
                     std::to_string(max_attempts) + " attempts failed";
  for (std::size_t i = 0; i < causes.size(); ++i) {
    what += "\n  [" + std::to_string(i + 1) + "] " + causes[i];
  }
  throw GatewayError(GatewayError::Kind::kExhausted, what, last_status);
}

// --- Gateway --------------------------------------------------------------

Gateway::Options Gateway::options_for(const ExperimentConfig& config) {
  Options o;
  o.max_in_flight = config.limits.concurrency;
  o.retry.max_attempts = config.limits.max_attempts;
  o.request_timeout = config.limits.request_timeout;
  return o;
}

Gateway::Gateway(const std::vector<ModelConfig>& models, Options options)
    : options_(std::move(options)) {
  std::shared_ptr<OpenAiProvider> http;
  for (const ModelConfig& m : models) {
    std::shared_ptr<ChatProvider> p;
    if (options_.factory) p = options_.factory(m);
    if (!p) {
      if (m.provider == ProviderKind::kScriptedMock) {
        p = std::make_shared<ScriptedProvider>(m.script);
      } else {
        if (!http) {
          http = std::make_shared<OpenAiProvider>(options_.request_timeout,
                                                  options_.log);
        }
        p = http;
      }
    }
    providers_.emplace(m.id, std::move(p));
  }
}

ChatProvider& Gateway::provider(std::string_view model_id) const {
  const auto it = providers_.find(model_id);
  if (it == providers_.end()) {
    throw GatewayError(GatewayError::Kind::kUnsupported,
                       "no provider registered for model '" +
                           std::string(model_id) + "'");
  }
  return *it->second;
}

Completion Gateway::chat(const ChatRequest& request) {
  ChatProvider& p = provider(request.model.id);
  {
    std::unique_lock lock(mutex_);
    slot_freed_.wait(lock, [&] {
      return in_flight_ < std::max(1, options_.max_in_flight);
    });
    ++in_flight_;
    ++total_calls_;
    peak_in_flight_ = std::max(peak_in_flight_, in_flight_);
  }
  struct Release {
    Gateway* g;
    ~Release() {
      {
        std::lock_guard lock(g->mutex_);
        --g->in_flight_;
      }
      g->slot_freed_.notify_one();
    }
  } release{this};

  const auto started = std::chrono::steady_clock::now();
  Completion c = chat_with_retry(p, request, options_.retry, options_.log);
  c.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  return c;
}

std::size_t Gateway::total_calls() const noexcept {
  std::lock_guard lock(mutex_);
  return total_calls_;
}

int Gateway::peak_in_flight() const noexcept {
  std::lock_guard lock(mutex_);
  return peak_in_flight_;
}

}  // namespace elmes
