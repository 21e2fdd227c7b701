#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "elmes/config.hpp"
#include "elmes/gateway.hpp"
#include "elmes/graph.hpp"
#include "elmes/store.hpp"
#include "elmes/transcript.hpp"

namespace elmes {

/// Suffix of `transcript` covering the last `keep_turns` turns, one turn
/// being one activation of each of the `agents_per_turn` agents. Without a
/// policy the transcript is returned whole.
std::vector<AttributedMessage> apply_memory_window(
    std::span<const AttributedMessage> transcript,
    const std::optional<MemoryPolicy>& policy, int agents_per_turn);

/// Messages sent to the model for one activation of `agent`: its rendered
/// templates, the task's start prompt when `opens_dialogue` and non-empty,
/// then the windowed transcript with the agent's own messages as assistant
/// turns and everyone else's as user turns.
std::vector<Message> build_agent_context(
    const AgentSpec& agent, const TestCase& test_case, const TaskSpec& tasks,
    std::span<const AttributedMessage> transcript, bool opens_dialogue,
    int agents_per_turn);

/// Runs one case through the graph. Each completion is handed to `sink`
/// before the next model call. Gateway and template failures end the case
/// with termination=error and keep the partial transcript.
DialogueRecord run_case(const WorkflowGraph& graph, const TestCase& test_case,
                        const ExperimentConfig& config, Gateway& gateway,
                        MessageSink& sink);

struct RunSummary {
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  std::chrono::milliseconds wall_time{0};
  int peak_in_flight = 0;
};

using CaseCallback = std::function<void(const TestCase&, const DialogueRecord&)>;

/// Runs every case not already complete in `store`, at most
/// config.limits.concurrency at a time. Failed and interrupted cases are
/// re-run from scratch.
RunSummary run_all(std::span<const TestCase> cases, const ExperimentConfig& config,
                   const WorkflowGraph& graph, Gateway& gateway, RunStore& store,
                   const CaseCallback& on_case_done = {});

}  // namespace elmes
