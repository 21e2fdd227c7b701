#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "elmes/config.hpp"
#include "elmes/error.hpp"
#include "elmes/transcript.hpp"
#include "json.hpp"

struct sqlite3;

namespace elmes {

enum class CaseStatus { kPending, kRunning, kComplete, kFailed };

std::string_view to_string(CaseStatus status) noexcept;

struct CaseRow {
  std::string case_id;
  Bindings bindings;
  CaseStatus status = CaseStatus::kPending;
  std::optional<Termination> termination;
  std::optional<std::string> error_detail;
};

/// One embedded SQLite database per run holding cases, messages and
/// evaluations. Writes are serialised through one connection; every append
/// is committed before it returns.
class RunStore final : public MessageSink {
 public:
  static constexpr int kSchemaVersion = 1;

  /// Creates the schema when absent; reopening is idempotent. Fails on a
  /// database stamped with a different schema version.
  RunStore(const std::filesystem::path& path, std::string run_name);
  ~RunStore() override;

  RunStore(const RunStore&) = delete;
  RunStore& operator=(const RunStore&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  const std::string& run_name() const noexcept { return run_name_; }

  /// Cheap liveness probe used before a run starts.
  void check_available() const;

  std::vector<std::string> table_names() const;

  /// Inserts the case as pending unless it is already known.
  void register_case(const TestCase& test_case);
  std::optional<CaseStatus> status(const std::string& case_id) const;
  void set_status(const std::string& case_id, CaseStatus status,
                  std::optional<Termination> termination = std::nullopt,
                  std::optional<std::string> error_detail = std::nullopt);
  /// Drops messages of a case so it can be re-run from scratch.
  void reset_case(const std::string& case_id);

  void append_message(const AttributedMessage& message) override;
  std::vector<AttributedMessage> messages(const std::string& case_id) const;

  std::vector<CaseRow> cases() const;
  std::optional<CaseRow> find_case(const std::string& case_id) const;
  /// Reassembled record of a case, or nullopt when unknown.
  std::optional<DialogueRecord> dialogue(const std::string& case_id) const;

  void save_evaluation(const std::string& case_id, const std::string& evaluator,
                       const nlohmann::ordered_json& values);
  bool has_evaluation(const std::string& case_id,
                      const std::string& evaluator) const;
  /// Field values of one evaluator for one case, in insertion order.
  std::optional<nlohmann::ordered_json> evaluation(
      const std::string& case_id, const std::string& evaluator) const;
  std::vector<std::string> evaluators(const std::string& case_id) const;

  /// One document per case: case_id, bindings, status, termination, ordered
  /// messages and evaluations keyed by evaluator name.
  nlohmann::ordered_json export_json() const;

 private:
  struct Closer {
    void operator()(sqlite3* db) const noexcept;
  };

  void exec(const char* sql) const;

  std::filesystem::path path_;
  std::string run_name_;
  std::unique_ptr<sqlite3, Closer> db_;
  mutable std::mutex mutex_;
};

struct LabelStudioExport {
  std::string interface_text;  // label-studio.txt
  nlohmann::ordered_json data; // label-studio.json
};

/// Annotation bundle for every complete case: a labelling interface with one
/// control per metric field (a 1-5 rating for int fields) next to the
/// dialogue, and one data item per case.
LabelStudioExport export_label_studio(const RunStore& store,
                                      const EvaluationSpec& spec);

}  // namespace elmes
