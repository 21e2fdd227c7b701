#include "elmes/transcript.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

namespace elmes {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view text) noexcept {
  if (text == "system") return Role::kSystem;
  if (text == "user") return Role::kUser;
  if (text == "assistant") return Role::kAssistant;
  return std::nullopt;
}

std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::kRouterEnd:
      return "router_end";
    case Termination::kMaxTurns:
      return "max_turns";
    case Termination::kError:
      return "error";
  }
  return "error";
}

std::optional<Termination> parse_termination(std::string_view text) noexcept {
  if (text == "router_end") return Termination::kRouterEnd;
  if (text == "max_turns") return Termination::kMaxTurns;
  if (text == "error") return Termination::kError;
  return std::nullopt;
}

std::string as_dialog(std::span<const AttributedMessage> messages) {
  std::string out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out += messages[i].agent;
    out += ": ";
    out += messages[i].content;
  }
  return out;
}

std::string utc_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto secs = time_point_cast<seconds>(now);
  const auto millis = duration_cast<milliseconds>(now - secs).count();
  const std::time_t tt = system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03lldZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, static_cast<long long>(millis));
  return buf;
}

}  // namespace elmes
