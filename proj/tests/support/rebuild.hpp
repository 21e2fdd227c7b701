#pragma once

#include "elmes/store.hpp"

namespace elmes::testing {

inline std::optional<Termination> termination_from(const nlohmann::ordered_json& v) {
  if (v.is_null()) return std::nullopt;
  return parse_termination(v.get<std::string>());
}

inline CaseStatus status_from(const std::string& s) {
  if (s == "pending") return CaseStatus::kPending;
  if (s == "running") return CaseStatus::kRunning;
  if (s == "complete") return CaseStatus::kComplete;
  return CaseStatus::kFailed;
}

// Writes an export_json document into an empty store through the public API.
inline void rebuild_from_export(RunStore& store, const nlohmann::ordered_json& doc) {
  std::size_t index = 0;
  for (const auto& c : doc) {
    TestCase tc;
    tc.case_id = c.at("case_id").get<std::string>();
    tc.index = index++;
    for (const auto& [k, v] : c.at("bindings").items()) tc.bindings[k] = v.get<std::string>();
    store.register_case(tc);
    for (const auto& m : c.at("messages")) {
      store.append_message({tc.case_id, m.at("seq").get<std::int64_t>(),
                            m.at("agent").get<std::string>(),
                            *parse_role(m.at("role").get<std::string>()),
                            m.at("content").get<std::string>(),
                            m.at("created_at").get<std::string>()});
    }
    std::optional<std::string> detail;
    if (c.contains("error_detail")) detail = c.at("error_detail").get<std::string>();
    store.set_status(tc.case_id, status_from(c.at("status").get<std::string>()),
                     termination_from(c.at("termination")), detail);
    for (const auto& [evaluator, values] : c.at("evaluations").items()) {
      store.save_evaluation(tc.case_id, evaluator, values);
    }
  }
}

}  // namespace elmes::testing
