#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unistd.h>

namespace elmes::testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "elmes-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
}

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(ELMES_TEST_FIXTURES) / name;
}

inline constexpr const char* kJudgeReply =
    "The tutor stays on task and checks understanding twice.\n"
    "```json\n"
    "{\"Accuracy\": 4, \"Guidance\": 5, \"Goal Alignment\": 4, "
    "\"Personalization\": 3, \"Metacognition\": 4, \"Cultural Integration\": 3}\n"
    "```\n";

// Scripted experiment: the teacher closes with "class over" on its third
// activation, so every case ends after 5 messages.
inline std::string offline_config_yaml(std::size_t n_cases, int concurrency = 4) {
  std::string images, questions;
  for (std::size_t i = 0; i < n_cases; ++i) {
    images += "      - \"student profile " + std::to_string(i) + "\"\n";
    questions += "      - \"question " + std::to_string(i) + "\"\n";
  }
  return R"(models:
  tutor_mock:
    type: scripted
    script:
      - "Let's start. What do you already know about this problem?"
      - "Good. Now try the next step on your own."
      - "Well done, that's all for today. Class over!"
  student_mock:
    type: scripted
    script:
      - "I think we need to add both sides first."
      - "So the answer is 12?"
  judge_mock:
    type: scripted
    script:
      - |
        The tutor stays on task and checks understanding twice.
        ```json
        {"Accuracy": 4, "Guidance": 5, "Goal Alignment": 4, "Personalization": 3, "Metacognition": 4, "Cultural Integration": 3}
        ```
agents:
  teacher:
    model: tutor_mock
    prompt:
      - role: system
        content: "You are a patient maths tutor."
      - role: user
        content: "Today's question: {question}"
    memory:
      keep_turns: 3
  student:
    model: student_mock
    prompt:
      - role: system
        content: "You are a student. Profile: {image}"
directions:
  - START -> teacher
  - teacher -> router:any_keyword_route(keywords=["class over", "see you"], exists_to=END, else_to="student")
  - student -> teacher
tasks:
  mode: union
  content:
    image:
)" + images + R"(    question:
)" + questions + R"(evaluation:
  model: judge_mock
  name: offline_judge
  prompt:
    - role: system
      content: |
        Score the tutoring dialogue.
        Question: {task.question}
        Dialogue:
        {messages.as_dialog()}
  format:
    - field: Accuracy
      type: int
      description: correctness of the tutor's content
    - field: Guidance
      type: int
      description: how well the tutor leads instead of telling
    - field: Goal Alignment
      type: int
      description: focus on the stated question
    - field: Personalization
      type: int
      description: use of the student profile
    - field: Metacognition
      type: int
      description: prompts for the student to reflect
    - field: Cultural Integration
      type: int
      description: use of culturally relevant material
  format_mode: prompt
  keywords: ["class over"]
limits:
  concurrency: )" + std::to_string(concurrency) + R"(
  max_turns: 20
)";
}

}  // namespace elmes::testing
