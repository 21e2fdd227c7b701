#pragma once

#include <compare>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "elmes/config.hpp"
#include "elmes/error.hpp"

namespace elmes {

inline constexpr std::string_view kStartNode = "START";
inline constexpr std::string_view kEndNode = "END";

/// An agent id or one of the START / END sentinels.
class NodeId {
 public:
  NodeId() = default;
  explicit NodeId(std::string value) : value_(std::move(value)) {}

  static NodeId start() { return NodeId(std::string(kStartNode)); }
  static NodeId end() { return NodeId(std::string(kEndNode)); }

  bool is_start() const noexcept { return value_ == kStartNode; }
  bool is_end() const noexcept { return value_ == kEndNode; }
  bool is_sentinel() const noexcept { return is_start() || is_end(); }

  const std::string& str() const noexcept { return value_; }

  friend auto operator<=>(const NodeId&, const NodeId&) = default;

 private:
  std::string value_;
};

enum class RouterKind { kAnyKeyword };

struct RouterSpec {
  RouterKind kind = RouterKind::kAnyKeyword;
  std::vector<std::string> keywords;
  NodeId exists_to;
  NodeId else_to;

  friend bool operator==(const RouterSpec&, const RouterSpec&) = default;
};

struct DirectionEdge {
  NodeId from;
  std::variant<NodeId, RouterSpec> to;

  bool is_router() const noexcept {
    return std::holds_alternative<RouterSpec>(to);
  }

  friend bool operator==(const DirectionEdge&, const DirectionEdge&) = default;
};

/// Canonical direction text; `parse_direction` maps it back to the same edge.
std::string to_string(const DirectionEdge& edge);

/// Parses `FROM -> TO` or
/// `FROM -> router:any_keyword_route(keywords=[...], exists_to=X, else_to=Y)`.
/// Node names may be bare or quoted; whitespace (including newlines) is free
/// between tokens.
DirectionEdge parse_direction(std::string_view text);

/// Agent interaction graph. Every node has at most one outgoing edge;
/// branching happens only through routers. Cycles are allowed.
class WorkflowGraph {
 public:
  /// START, agents in declaration order, END.
  const std::vector<NodeId>& nodes() const noexcept { return nodes_; }
  /// Edges in declaration order.
  const std::vector<DirectionEdge>& edges() const noexcept { return edges_; }

  const DirectionEdge* outgoing(const NodeId& node) const noexcept;
  bool contains(const NodeId& node) const noexcept;

  /// Distinct agents reachable from START: the number of activations that
  /// make up one turn of the dialogue cycle.
  int agents_per_turn() const noexcept { return agents_per_turn_; }

 private:
  friend WorkflowGraph build_graph(std::span<const AgentSpec>,
                                   std::span<const std::string>);

  std::vector<NodeId> nodes_;
  std::vector<DirectionEdge> edges_;
  std::map<NodeId, std::size_t> edge_index_;
  int agents_per_turn_ = 0;
};

/// Validates and assembles the graph: single outgoing edge per node, every
/// referenced node defined, START has an edge, END reachable along some
/// branch choice, and no reachable agent is left without a successor.
WorkflowGraph build_graph(std::span<const AgentSpec> agents,
                          std::span<const std::string> directions);

/// ASCII case fold.
std::string casefold(std::string_view text);

/// True iff any keyword occurs as a case-folded substring of `text`.
bool any_keyword_matches(std::span<const std::string> keywords,
                         std::string_view text);

/// Successor of `current` given the message it just produced.
NodeId next_node(const WorkflowGraph& graph, const NodeId& current,
                 std::string_view last_message_text);

/// Graphviz DOT rendering. Routers produce two labelled edges.
std::string to_dot(const WorkflowGraph& graph);

}  // namespace elmes
