#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace elmes {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role) noexcept;
std::optional<Role> parse_role(std::string_view text) noexcept;

struct Message {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

/// One persisted utterance of a dialogue, attributed to the agent that
/// produced it.
struct AttributedMessage {
  std::string case_id;
  std::int64_t seq = 0;
  std::string agent;
  Role role = Role::kAssistant;
  std::string content;
  std::string created_at;  // ISO-8601 UTC

  friend bool operator==(const AttributedMessage&,
                         const AttributedMessage&) = default;
};

enum class Termination { kRouterEnd, kMaxTurns, kError };

std::string_view to_string(Termination t) noexcept;
std::optional<Termination> parse_termination(std::string_view text) noexcept;

struct DialogueRecord {
  std::string case_id;
  std::vector<AttributedMessage> messages;
  Termination termination = Termination::kRouterEnd;
  std::optional<std::string> error_detail;
};

/// Receives each message of a dialogue as soon as it exists.
class MessageSink {
 public:
  virtual ~MessageSink() = default;
  virtual void append_message(const AttributedMessage& message) = 0;
};

/// "<agent>: <content>" per message, newline separated.
std::string as_dialog(std::span<const AttributedMessage> messages);

/// Current wall-clock time as ISO-8601 UTC with millisecond precision.
std::string utc_timestamp();

}  // namespace elmes
