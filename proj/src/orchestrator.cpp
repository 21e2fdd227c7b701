#include "elmes/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

namespace elmes {

std::vector<AttributedMessage> apply_memory_window(
    std::span<const AttributedMessage> transcript,
    const std::optional<MemoryPolicy>& policy, int agents_per_turn) {
  if (!policy) return {transcript.begin(), transcript.end()};
  const std::size_t window = static_cast<std::size_t>(std::max(1, policy->keep_turns)) *
                             static_cast<std::size_t>(std::max(1, agents_per_turn));
  const std::size_t keep = std::min(window, transcript.size());
  return {transcript.end() - static_cast<std::ptrdiff_t>(keep), transcript.end()};
}

std::vector<Message> build_agent_context(
    const AgentSpec& agent, const TestCase& test_case, const TaskSpec& tasks,
    std::span<const AttributedMessage> transcript, bool opens_dialogue,
    int agents_per_turn) {
  const RenderContext ctx = RenderContext::for_bindings(test_case.bindings);
  std::vector<Message> out;
  for (const PromptTemplate& t : agent.prompt) out.push_back(render_template(t, ctx));
  if (opens_dialogue) {
    Message start = render_template(tasks.start_prompt, ctx);
    if (!start.content.empty()) out.push_back(std::move(start));
  }
  for (const AttributedMessage& m :
       apply_memory_window(transcript, agent.memory, agents_per_turn)) {
    out.push_back({m.agent == agent.id ? Role::kAssistant : Role::kUser, m.content});
  }
  return out;
}

DialogueRecord run_case(const WorkflowGraph& graph, const TestCase& test_case,
                        const ExperimentConfig& config, Gateway& gateway,
                        MessageSink& sink) {
  DialogueRecord record;
  record.case_id = test_case.case_id;

  try {
    NodeId current = next_node(graph, NodeId::start(), "");
    const NodeId first_agent = current;
    int activations = 0;

    while (!current.is_end()) {
      if (activations >= config.limits.max_turns) {
        record.termination = Termination::kMaxTurns;
        return record;
      }
      const AgentSpec* agent = config.find_agent(current.str());
      if (agent == nullptr) {
        throw GraphError(GraphError::Kind::kUndefinedNode,
                         "graph node '" + current.str() + "' is not a configured agent");
      }
      const ModelConfig* model = config.find_model(agent->model);
      if (model == nullptr) {
        throw GatewayError(GatewayError::Kind::kUnsupported,
                           "agent '" + agent->id + "' uses unknown model '" +
                               agent->model + "'");
      }

      ChatRequest request;
      request.model = *model;
      request.session = test_case.case_id + "/" + agent->id;
      request.messages =
          build_agent_context(*agent, test_case, config.tasks, record.messages,
                              current == first_agent, graph.agents_per_turn());

      Completion reply = gateway.chat(request);
      ++activations;

      AttributedMessage msg;
      msg.case_id = test_case.case_id;
      msg.seq = static_cast<std::int64_t>(record.messages.size());
      msg.agent = agent->id;
      msg.role = Role::kAssistant;
      msg.content = std::move(reply.text);
      msg.created_at = utc_timestamp();
      sink.append_message(msg);
      record.messages.push_back(std::move(msg));

      current = next_node(graph, current, record.messages.back().content);
    }
    record.termination = Termination::kRouterEnd;
  } catch (const std::exception& e) {
    record.termination = Termination::kError;
    record.error_detail = e.what();
  }
  return record;
}

RunSummary run_all(std::span<const TestCase> cases, const ExperimentConfig& config,
                   const WorkflowGraph& graph, Gateway& gateway, RunStore& store,
                   const CaseCallback& on_case_done) {
  const auto started = std::chrono::steady_clock::now();
  store.check_available();
  for (const TestCase& c : cases) store.register_case(c);

  RunSummary summary;
  std::mutex mutex;
  int in_flight = 0;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cases.size()) return;
      const TestCase& test_case = cases[i];

      if (store.status(test_case.case_id) == CaseStatus::kComplete) {
        std::lock_guard lock(mutex);
        ++summary.skipped;
        continue;
      }
      {
        std::lock_guard lock(mutex);
        ++in_flight;
        summary.peak_in_flight = std::max(summary.peak_in_flight, in_flight);
      }

      DialogueRecord record;
      record.case_id = test_case.case_id;
      try {
        store.reset_case(test_case.case_id);
        store.set_status(test_case.case_id, CaseStatus::kRunning);
        record = run_case(graph, test_case, config, gateway, store);
        const bool ok = record.termination != Termination::kError;
        store.set_status(test_case.case_id,
                         ok ? CaseStatus::kComplete : CaseStatus::kFailed,
                         record.termination, record.error_detail);
      } catch (const std::exception& e) {
        record.termination = Termination::kError;
        record.error_detail = e.what();
      }

      {
        std::lock_guard lock(mutex);
        --in_flight;
        if (record.termination == Termination::kError) {
          ++summary.failed;
        } else {
          ++summary.completed;
        }
        if (on_case_done) on_case_done(test_case, record);
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(
      static_cast<std::size_t>(std::max(1, config.limits.concurrency)), cases.size());
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();

  summary.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  return summary;
}

}  // namespace elmes
