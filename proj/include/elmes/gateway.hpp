#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "elmes/config.hpp"
#include "elmes/error.hpp"
#include "elmes/transcript.hpp"
#include "json.hpp"

namespace elmes {

using LogFn = std::function<void(std::string_view)>;

struct ToolDecl {
  std::string name;
  std::string description;
  nlohmann::ordered_json parameters;  // JSON Schema document
};

struct ToolCall {
  std::string name;
  nlohmann::ordered_json arguments;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int total_tokens = 0;
};

struct ChatRequest {
  ModelConfig model;
  std::vector<Message> messages;
  std::vector<ToolDecl> tools;
  // Identifies the conversation the call belongs to (case + agent). Scripted
  // providers count calls per session so replay is independent of scheduling.
  std::string session;
};

struct Completion {
  std::string text;
  std::optional<ToolCall> tool_call;
  std::optional<Usage> usage;
  std::chrono::milliseconds latency{0};
  int attempts = 1;
};

class GatewayError : public Error {
 public:
  enum class Kind {
    kTransport,   // connection refused, timeout, TLS
    kHttpStatus,  // non-2xx answer
    kMalformed,   // 2xx with an unusable body
    kCredential,  // key missing or unresolvable
    kExhausted,   // every retry attempt failed
    kUnsupported, // provider or URL scheme not usable in this build
  };

  GatewayError(Kind kind, const std::string& what, int status = 0,
               std::string body_excerpt = {})
      : Error(ErrorCategory::kRuntime, what),
        kind_(kind),
        status_(status),
        body_excerpt_(std::move(body_excerpt)) {}

  Kind kind() const noexcept { return kind_; }
  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }

  /// Transport failures, 429 and 5xx.
  bool retryable() const noexcept {
    return kind_ == Kind::kTransport ||
           (kind_ == Kind::kHttpStatus && (status_ == 429 || status_ >= 500));
  }

 private:
  Kind kind_;
  int status_;
  std::string body_excerpt_;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual Completion complete(const ChatRequest& request) = 0;
};

/// Serialises a request in the OpenAI chat-completions wire format.
nlohmann::ordered_json build_chat_body(const ChatRequest& request);

/// Maps a chat-completions response body onto a Completion.
Completion parse_chat_response(std::string_view body);

/// Resolves `env:NAME` or a literal key. Throws kCredential when empty.
std::string resolve_api_key(const ModelConfig& model);

/// HTTP client for OpenAI-compatible endpoints. Keeps a pool of keep-alive
/// connections per base URL and is safe for concurrent use.
class OpenAiProvider final : public ChatProvider {
 public:
  explicit OpenAiProvider(std::chrono::seconds timeout = std::chrono::seconds(120),
                          LogFn log = {});
  ~OpenAiProvider() override;

  Completion complete(const ChatRequest& request) override;

 private:
  struct Pool;
  std::chrono::seconds timeout_;
  LogFn log_;
  std::unique_ptr<Pool> pool_;
};

/// Deterministic stand-in model. Call i of a session returns
/// script[min(i, size - 1)] whatever the request says.
class ScriptedProvider final : public ChatProvider {
 public:
  explicit ScriptedProvider(std::vector<ScriptEntry> script);

  Completion complete(const ChatRequest& request) override;

  std::vector<ChatRequest> requests() const;
  std::size_t call_count() const;

 private:
  std::vector<ScriptEntry> script_;
  mutable std::mutex mutex_;
  std::map<std::string, std::size_t> calls_per_session_;
  std::vector<ChatRequest> requests_;
};

/// Adapts a callable; used for custom offline behaviours.
class CallbackProvider final : public ChatProvider {
 public:
  using Fn = std::function<Completion(const ChatRequest&)>;
  explicit CallbackProvider(Fn fn) : fn_(std::move(fn)) {}
  Completion complete(const ChatRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{20'000};
  std::optional<std::uint64_t> seed;  // jitter RNG seed; random when unset
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleep_for
};

/// Upper bound of the full-jitter window before attempt `attempt + 1`:
/// min(max_delay, base_delay * 2^(attempt - 1)).
std::chrono::milliseconds backoff_cap(const RetryPolicy& policy, int attempt);

/// Retries transport errors, 429 and 5xx with exponential backoff and full
/// jitter. Other errors are rethrown at once. When every attempt fails the
/// thrown kExhausted error lists each attempt's cause.
Completion chat_with_retry(ChatProvider& provider, const ChatRequest& request,
                           const RetryPolicy& policy, const LogFn& log = {});

/// Routes requests to the provider of each configured model and caps the
/// number of calls in flight across the whole run.
class Gateway {
 public:
  using ProviderFactory =
      std::function<std::shared_ptr<ChatProvider>(const ModelConfig&)>;

  struct Options {
    int max_in_flight = 8;
    RetryPolicy retry;
    std::chrono::seconds request_timeout{120};
    LogFn log;
    // Overrides provider construction; used for instrumentation in tests.
    ProviderFactory factory;
  };

  Gateway(const std::vector<ModelConfig>& models, Options options);

  static Options options_for(const ExperimentConfig& config);

  Completion chat(const ChatRequest& request);

  ChatProvider& provider(std::string_view model_id) const;

  std::size_t total_calls() const noexcept;
  int peak_in_flight() const noexcept;

 private:
  Options options_;
  std::map<std::string, std::shared_ptr<ChatProvider>, std::less<>> providers_;
  mutable std::mutex mutex_;
  std::condition_variable slot_freed_;
  int in_flight_ = 0;
  int peak_in_flight_ = 0;
  std::size_t total_calls_ = 0;
};

}  // namespace elmes
