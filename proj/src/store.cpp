#include "elmes/store.hpp"

#include <sqlite3.h>

#include <sstream>

namespace elmes {
namespace {

using json = nlohmann::ordered_json;

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw StoreError(StoreError::Kind::kQuery,
                       std::string("prepare failed: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int idx, const std::string& value) {
    sqlite3_bind_text(stmt_, idx, value.data(), static_cast<int>(value.size()),
                      SQLITE_TRANSIENT);
    return *this;
  }
  Statement& bind(int idx, std::int64_t value) {
    sqlite3_bind_int64(stmt_, idx, value);
    return *this;
  }
  Statement& bind_null(int idx) {
    sqlite3_bind_null(stmt_, idx);
    return *this;
  }
  Statement& bind(int idx, const std::optional<std::string>& value) {
    return value ? bind(idx, *value) : bind_null(idx);
  }

  /// true while rows are available
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    const auto kind = (rc & 0xff) == SQLITE_CONSTRAINT
                          ? StoreError::Kind::kIntegrity
                          : StoreError::Kind::kQuery;
    throw StoreError(kind, std::string("store: ") + sqlite3_errmsg(db_));
  }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p),
                           static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }
  std::optional<std::string> optional_text(int col) const {
    if (sqlite3_column_type(stmt_, col) == SQLITE_NULL) return std::nullopt;
    return text(col);
  }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

std::optional<CaseStatus> parse_status(std::string_view s) {
  if (s == "pending") return CaseStatus::kPending;
  if (s == "running") return CaseStatus::kRunning;
  if (s == "complete") return CaseStatus::kComplete;
  if (s == "failed") return CaseStatus::kFailed;
  return std::nullopt;
}

Bindings bindings_from_doc(const std::string& doc) {
  Bindings out;
  const json parsed = json::parse(doc);
  for (const auto& [k, v] : parsed.items()) out[k] = v.get<std::string>();
  return out;
}

std::string bindings_doc(const Bindings& b) {
  json doc = json::object();
  for (const auto& [k, v] : b) doc[k] = v;
  return doc.dump();
}

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS cases (
  case_id      TEXT PRIMARY KEY,
  bindings_doc TEXT NOT NULL,
  status       TEXT NOT NULL,
  termination  TEXT,
  error_detail TEXT
);
CREATE TABLE IF NOT EXISTS messages (
  case_id    TEXT NOT NULL REFERENCES cases(case_id),
  seq        INTEGER NOT NULL,
  agent      TEXT NOT NULL,
  role       TEXT NOT NULL,
  content    TEXT NOT NULL,
  created_at TEXT NOT NULL,
  PRIMARY KEY (case_id, seq)
);
CREATE TABLE IF NOT EXISTS evaluations (
  case_id    TEXT NOT NULL REFERENCES cases(case_id),
  evaluator  TEXT NOT NULL,
  field      TEXT NOT NULL,
  value_doc  TEXT NOT NULL,
  created_at TEXT NOT NULL,
  PRIMARY KEY (case_id, evaluator, field)
);
)sql";

std::string xml_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(CaseStatus status) noexcept {
  switch (status) {
    case CaseStatus::kPending:
      return "pending";
    case CaseStatus::kRunning:
      return "running";
    case CaseStatus::kComplete:
      return "complete";
    case CaseStatus::kFailed:
      return "failed";
  }
  return "pending";
}

void RunStore::Closer::operator()(sqlite3* db) const noexcept { sqlite3_close_v2(db); }

RunStore::RunStore(const std::filesystem::path& path, std::string run_name)
    : path_(path), run_name_(std::move(run_name)) {
  sqlite3* raw = nullptr;
  const int rc = sqlite3_open_v2(
      path.string().c_str(), &raw,
      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX, nullptr);
  db_.reset(raw);
  if (rc != SQLITE_OK) {
    throw StoreError(StoreError::Kind::kOpen,
                     "cannot open run store '" + path.string() + "': " +
                         (raw ? sqlite3_errmsg(raw) : "out of memory"));
  }
  sqlite3_busy_timeout(db_.get(), 5000);

  int version = 0;
  try {
    Statement st(db_.get(), "PRAGMA user_version");
    if (st.step()) version = static_cast<int>(st.integer(0));
  } catch (const StoreError& e) {
    throw StoreError(StoreError::Kind::kOpen,
                     "cannot read run store '" + path.string() + "': " + e.what());
  }
  if (version != 0 && version != kSchemaVersion) {
    throw StoreError(StoreError::Kind::kVersion,
                     "run store '" + path.string() + "' has schema version " +
                         std::to_string(version) + " but this build supports " +
                         std::to_string(kSchemaVersion));
  }
  try {
    exec("PRAGMA journal_mode=WAL");
    exec("PRAGMA synchronous=FULL");
    exec("PRAGMA foreign_keys=ON");
    exec(kSchema);
    if (version == 0) {
      exec(("PRAGMA user_version=" + std::to_string(kSchemaVersion)).c_str());
    }
  } catch (const StoreError& e) {
    throw StoreError(StoreError::Kind::kOpen,
                     "cannot initialise run store '" + path.string() + "': " +
                         e.what());
  }
}

RunStore::~RunStore() = default;

void RunStore::exec(const char* sql) const {
  char* err = nullptr;
  if (sqlite3_exec(db_.get(), sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw StoreError(StoreError::Kind::kQuery, msg);
  }
}

void RunStore::check_available() const {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(), "SELECT count(*) FROM cases");
  st.step();
}

std::vector<std::string> RunStore::table_names() const {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(),
               "SELECT name FROM sqlite_master WHERE type='table' ORDER BY name");
  std::vector<std::string> out;
  while (st.step()) out.push_back(st.text(0));
  return out;
}

void RunStore::register_case(const TestCase& test_case) {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(),
               "INSERT OR IGNORE INTO cases(case_id, bindings_doc, status) "
               "VALUES(?, ?, 'pending')");
  st.bind(1, test_case.case_id).bind(2, bindings_doc(test_case.bindings));
  st.step();
}

std::optional<CaseStatus> RunStore::status(const std::string& case_id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(), "SELECT status FROM cases WHERE case_id = ?");
  st.bind(1, case_id);
  if (!st.step()) return std::nullopt;
  return parse_status(st.text(0));
}

void RunStore::set_status(const std::string& case_id, CaseStatus status,
                          std::optional<Termination> termination,
                          std::optional<std::string> error_detail) {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(),
               "UPDATE cases SET status = ?, termination = ?, error_detail = ? "
               "WHERE case_id = ?");
  st.bind(1, std::string(to_string(status)));
  st.bind(2, termination ? std::optional<std::string>(std::string(to_string(*termination)))
                         : std::nullopt);
  st.bind(3, error_detail);
  st.bind(4, case_id);
  st.step();
  if (sqlite3_changes(db_.get()) == 0) {
    throw StoreError(StoreError::Kind::kIntegrity,
                     "case '" + case_id + "' is not registered");
  }
}

void RunStore::reset_case(const std::string& case_id) {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(), "DELETE FROM messages WHERE case_id = ?");
  st.bind(1, case_id);
  st.step();
}

void RunStore::append_message(const AttributedMessage& m) {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(),
               "INSERT INTO messages(case_id, seq, agent, role, content, created_at) "
               "VALUES(?, ?, ?, ?, ?, ?)");
  st.bind(1, m.case_id)
      .bind(2, m.seq)
      .bind(3, m.agent)
      .bind(4, std::string(to_string(m.role)))
      .bind(5, m.content)
      .bind(6, m.created_at);
  try {
    st.step();
  } catch (const StoreError& e) {
    if (e.kind() == StoreError::Kind::kIntegrity) {
      throw StoreError(StoreError::Kind::kIntegrity,
                       "message (" + m.case_id + ", " + std::to_string(m.seq) +
                           ") rejected: " + e.what());
    }
    throw;
  }
}

std::vector<AttributedMessage> RunStore::messages(const std::string& case_id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(),
               "SELECT seq, agent, role, content, created_at FROM messages "
               "WHERE case_id = ? ORDER BY seq");
  st.bind(1, case_id);
  std::vector<AttributedMessage> out;
  while (st.step()) {
    AttributedMessage m;
    m.case_id = case_id;
    m.seq = st.integer(0);
    m.agent = st.text(1);
    m.role = parse_role(st.text(2)).value_or(Role::kAssistant);
    m.content = st.text(3);
    m.created_at = st.text(4);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<CaseRow> RunStore::cases() const {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(),
               "SELECT case_id, bindings_doc, status, termination, error_detail "
               "FROM cases ORDER BY case_id");
  std::vector<CaseRow> out;
  while (st.step()) {
    CaseRow row;
    row.case_id = st.text(0);
    row.bindings = bindings_from_doc(st.text(1));
    row.status = parse_status(st.text(2)).value_or(CaseStatus::kPending);
    if (const auto t = st.optional_text(3)) row.termination = parse_termination(*t);
    row.error_detail = st.optional_text(4);
    out.push_back(std::move(row));
  }
  return out;
}

std::optional<CaseRow> RunStore::find_case(const std::string& case_id) const {
  for (auto& row : cases()) {
    if (row.case_id == case_id) return row;
  }
  return std::nullopt;
}

std::optional<DialogueRecord> RunStore::dialogue(const std::string& case_id) const {
  const auto row = find_case(case_id);
  if (!row) return std::nullopt;
  DialogueRecord rec;
  rec.case_id = case_id;
  rec.messages = messages(case_id);
  rec.termination = row->termination.value_or(Termination::kError);
  rec.error_detail = row->error_detail;
  return rec;
}

void RunStore::save_evaluation(const std::string& case_id,
                               const std::string& evaluator,
                               const nlohmann::ordered_json& values) {
  std::lock_guard lock(mutex_);
  const std::string now = utc_timestamp();
  exec("BEGIN IMMEDIATE");
  try {
    {
      Statement del(db_.get(),
                    "DELETE FROM evaluations WHERE case_id = ? AND evaluator = ?");
      del.bind(1, case_id).bind(2, evaluator);
      del.step();
    }
    for (const auto& [field, value] : values.items()) {
      Statement st(db_.get(),
                   "INSERT INTO evaluations(case_id, evaluator, field, value_doc, "
                   "created_at) VALUES(?, ?, ?, ?, ?)");
      st.bind(1, case_id).bind(2, evaluator).bind(3, field).bind(4, value.dump()).bind(5, now);
      st.step();
    }
    exec("COMMIT");
  } catch (...) {
    exec("ROLLBACK");
    throw;
  }
}

bool RunStore::has_evaluation(const std::string& case_id,
                              const std::string& evaluator) const {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(),
               "SELECT 1 FROM evaluations WHERE case_id = ? AND evaluator = ? LIMIT 1");
  st.bind(1, case_id).bind(2, evaluator);
  return st.step();
}

std::optional<nlohmann::ordered_json> RunStore::evaluation(
    const std::string& case_id, const std::string& evaluator) const {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(),
               "SELECT field, value_doc FROM evaluations "
               "WHERE case_id = ? AND evaluator = ? ORDER BY rowid");
  st.bind(1, case_id).bind(2, evaluator);
  json values = json::object();
  bool any = false;
  while (st.step()) {
    values[st.text(0)] = json::parse(st.text(1));
    any = true;
  }
  if (!any) return std::nullopt;
  return values;
}

std::vector<std::string> RunStore::evaluators(const std::string& case_id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_.get(),
               "SELECT evaluator FROM evaluations WHERE case_id = ? "
               "GROUP BY evaluator ORDER BY min(rowid)");
  st.bind(1, case_id);
  std::vector<std::string> out;
  while (st.step()) out.push_back(st.text(0));
  return out;
}

nlohmann::ordered_json RunStore::export_json() const {
  json out = json::array();
  for (const CaseRow& row : cases()) {
    json doc;
    doc["case_id"] = row.case_id;
    doc["bindings"] = json::object();
    for (const auto& [k, v] : row.bindings) doc["bindings"][k] = v;
    doc["status"] = std::string(to_string(row.status));
    doc["termination"] =
        row.termination ? json(std::string(to_string(*row.termination))) : json();
    if (row.error_detail) doc["error_detail"] = *row.error_detail;
    doc["messages"] = json::array();
    for (const auto& m : messages(row.case_id)) {
      doc["messages"].push_back({{"seq", m.seq},
                                 {"agent", m.agent},
                                 {"role", std::string(to_string(m.role))},
                                 {"content", m.content},
                                 {"created_at", m.created_at}});
    }
    doc["evaluations"] = json::object();
    for (const auto& evaluator : evaluators(row.case_id)) {
      doc["evaluations"][evaluator] = *evaluation(row.case_id, evaluator);
    }
    out.push_back(std::move(doc));
  }
  return out;
}

LabelStudioExport export_label_studio(const RunStore& store,
                                      const EvaluationSpec& spec) {
  LabelStudioExport out;
  out.data = json::array();
  int id = 0;
  for (const CaseRow& row : store.cases()) {
    if (row.status != CaseStatus::kComplete) continue;
    const auto messages = store.messages(row.case_id);
    json item;
    item["id"] = ++id;
    json data;
    data["case_id"] = row.case_id;
    data["dialogue"] = json::array();
    for (const auto& m : messages) {
      data["dialogue"].push_back({{"author", m.agent}, {"text", m.content}});
    }
    data["dialogue_text"] = as_dialog(messages);
    data["bindings"] = json::object();
    std::string bindings_text;
    for (const auto& [k, v] : row.bindings) {
      data["bindings"][k] = v;
      if (!bindings_text.empty()) bindings_text += "\n";
      bindings_text += k + ": " + v;
    }
    data["bindings_text"] = bindings_text;
    item["data"] = std::move(data);
    out.data.push_back(std::move(item));
  }
  if (out.data.empty()) {
    throw StoreError(StoreError::Kind::kEmptyRun,
                     "run '" + store.run_name() +
                         "' has no complete cases to export for annotation");
  }

  std::ostringstream xml;
  xml << "<View>\n"
      << "  <Header value=\"Dialogue\"/>\n"
      << "  <Paragraphs name=\"dialogue\" value=\"$dialogue\" layout=\"dialogue\""
         " nameKey=\"author\" textKey=\"text\"/>\n"
      << "  <Header value=\"Task\"/>\n"
      << "  <Text name=\"bindings\" value=\"$bindings_text\"/>\n"
      << "  <Header value=\"" << xml_escape(spec.name) << "\"/>\n";
  for (const MetricField& f : spec.format) {
    const std::string name = xml_escape(f.name);
    xml << "  <View>\n    <Header value=\"" << name << "\"/>\n";
    if (!f.description.empty()) {
      xml << "    <Header value=\"" << xml_escape(f.description) << "\" size=\"6\"/>\n";
    }
    switch (f.type) {
      case MetricType::kInt:
        xml << "    <Rating name=\"" << name
            << "\" toName=\"dialogue\" maxRating=\"5\" icon=\"star\" required=\"true\"/>\n";
        break;
      case MetricType::kFloat:
        xml << "    <Number name=\"" << name
            << "\" toName=\"dialogue\" min=\"1\" max=\"5\" step=\"0.1\"/>\n";
        break;
      case MetricType::kStr:
        xml << "    <TextArea name=\"" << name
            << "\" toName=\"dialogue\" rows=\"3\" editable=\"true\"/>\n";
        break;
      case MetricType::kBool:
        xml << "    <Choices name=\"" << name
            << "\" toName=\"dialogue\" choice=\"single-radio\">\n"
               "      <Choice value=\"true\"/>\n      <Choice value=\"false\"/>\n"
               "    </Choices>\n";
        break;
    }
    xml << "  </View>\n";
  }
  xml << "</View>\n";
  out.interface_text = xml.str();
  return out;
}

}  // namespace elmes
