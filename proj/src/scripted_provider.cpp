#include <algorithm>

#include "elmes/gateway.hpp"

namespace elmes {

ScriptedProvider::ScriptedProvider(std::vector<ScriptEntry> script)
    : script_(std::move(script)) {
  if (script_.empty()) {
    throw GatewayError(GatewayError::Kind::kUnsupported,
                       "scripted provider needs at least one entry");
  }
}

Completion ScriptedProvider::complete(const ChatRequest& request) {
  std::size_t index = 0;
  {
    std::lock_guard lock(mutex_);
    index = calls_per_session_[request.session]++;
    requests_.push_back(request);
  }
  const ScriptEntry& entry = script_[std::min(index, script_.size() - 1)];
  if (entry.error_status) {
    throw GatewayError(GatewayError::Kind::kHttpStatus,
                       "scripted failure: HTTP " + std::to_string(*entry.error_status),
                       *entry.error_status);
  }
  Completion c;
  c.text = entry.text;
  if (entry.tool_name) {
    c.tool_call = ToolCall{*entry.tool_name,
                           entry.tool_arguments.value_or(nlohmann::ordered_json::object())};
    c.text.clear();
  }
  return c;
}

std::vector<ChatRequest> ScriptedProvider::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t ScriptedProvider::call_count() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

}  // namespace elmes
