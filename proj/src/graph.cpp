#include "elmes/graph.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <optional>
#include <set>
#include <sstream>

namespace elmes {
namespace {

bool name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

bool is_bare_name(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), name_char);
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string node_text(const NodeId& id) {
  return is_bare_name(id.str()) ? id.str() : quote(id.str());
}

// --- direction lexer / parser ---------------------------------------------

enum class Tok { kName, kString, kArrow, kColon, kLParen, kRParen, kLBracket,
                 kRBracket, kComma, kEquals, kEnd };

struct Token {
  Tok kind;
  std::string text;
  std::size_t pos;
};

class DirectionParser {
 public:
  explicit DirectionParser(std::string_view text) : text_(text) { advance(); }

  DirectionEdge parse() {
    DirectionEdge edge;
    edge.from = NodeId(expect_node("source node"));
    if (current_.kind != Tok::kArrow) fail("expected '->'");
    advance();

    if (current_.kind == Tok::kName && current_.text == "router" &&
        peek_is(':')) {
      advance();  // router
      advance();  // :
      edge.to = parse_router();
    } else {
      edge.to = NodeId(expect_node("target node"));
    }
    if (current_.kind != Tok::kEnd) fail("unexpected trailing input");

    if (edge.from.is_end()) {
      throw GraphError(GraphError::Kind::kInvalidEdge,
                       "END cannot have an outgoing edge");
    }
    auto reject_start = [](const NodeId& n) {
      if (n.is_start()) {
        throw GraphError(GraphError::Kind::kInvalidEdge,
                         "START cannot be an edge target");
      }
    };
    if (const auto* plain = std::get_if<NodeId>(&edge.to)) {
      reject_start(*plain);
    } else {
      const auto& r = std::get<RouterSpec>(edge.to);
      reject_start(r.exists_to);
      reject_start(r.else_to);
    }
    return edge;
  }

 private:
  [[noreturn]] void fail(const std::string& why,
                         GraphError::Kind kind = GraphError::Kind::kSyntax) {
    throw GraphError(kind, "direction '" + std::string(text_) + "': " + why +
                               " at offset " + std::to_string(current_.pos));
  }

  bool peek_is(char c) const {
    std::size_t i = pos_;
    while (i < text_.size() && std::isspace(static_cast<unsigned char>(text_[i])))
      ++i;
    return i < text_.size() && text_[i] == c;
  }

  void advance() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    const std::size_t start = pos_;
    if (pos_ >= text_.size()) {
      current_ = {Tok::kEnd, "", start};
      return;
    }
    const char c = text_[pos_];
    auto single = [&](Tok kind) {
      ++pos_;
      current_ = {kind, std::string(1, c), start};
    };
    switch (c) {
      case ':': return single(Tok::kColon);
      case '(': return single(Tok::kLParen);
      case ')': return single(Tok::kRParen);
      case '[': return single(Tok::kLBracket);
      case ']': return single(Tok::kRBracket);
      case ',': return single(Tok::kComma);
      case '=': return single(Tok::kEquals);
      default: break;
    }
    if (c == '-' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
      pos_ += 2;
      current_ = {Tok::kArrow, "->", start};
      return;
    }
    if (c == '"' || c == '\'') {
      std::string value;
      ++pos_;
      for (;;) {
        if (pos_ >= text_.size()) {
          current_ = {Tok::kEnd, "", start};
          fail("unterminated string");
        }
        const char d = text_[pos_++];
        if (d == c) break;
        if (d == '\\' && pos_ < text_.size()) {
          value.push_back(text_[pos_++]);
        } else {
          value.push_back(d);
        }
      }
      current_ = {Tok::kString, std::move(value), start};
      return;
    }
    if (name_char(c)) {
      while (pos_ < text_.size() && name_char(text_[pos_])) {
        // A '-' immediately followed by '>' starts an arrow, even unspaced.
        if (text_[pos_] == '-' && pos_ + 1 < text_.size() &&
            text_[pos_ + 1] == '>')
          break;
        ++pos_;
      }
      current_ = {Tok::kName, std::string(text_.substr(start, pos_ - start)),
                  start};
      return;
    }
    current_ = {Tok::kEnd, "", start};
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string expect_node(const char* what) {
    if (current_.kind != Tok::kName && current_.kind != Tok::kString) {
      fail(std::string("expected ") + what);
    }
    std::string value = current_.text;
    if (value.empty()) fail(std::string("empty ") + what);
    advance();
    return value;
  }

  RouterSpec parse_router() {
    if (current_.kind != Tok::kName) fail("expected router kind");
    if (current_.text != "any_keyword_route") {
      fail("unknown router kind '" + current_.text + "'",
           GraphError::Kind::kUnknownRouter);
    }
    advance();
    if (current_.kind != Tok::kLParen) fail("expected '(' after router kind");
    advance();

    RouterSpec spec;
    bool have_keywords = false;
    std::optional<NodeId> exists_to;
    std::optional<NodeId> else_to;
    const auto bad = GraphError::Kind::kBadArguments;

    while (current_.kind != Tok::kRParen) {
      if (current_.kind != Tok::kName) fail("expected argument name", bad);
      const std::string arg = current_.text;
      advance();
      if (current_.kind != Tok::kEquals) fail("expected '=' after " + arg, bad);
      advance();
      if (arg == "keywords") {
        if (have_keywords) fail("duplicate argument keywords", bad);
        have_keywords = true;
        spec.keywords = parse_keyword_list();
      } else if (arg == "exists_to" || arg == "else_to") {
        auto& slot = arg == "exists_to" ? exists_to : else_to;
        if (slot) fail("duplicate argument " + arg, bad);
        slot = NodeId(expect_node(arg.c_str()));
      } else {
        fail("unknown router argument '" + arg + "'", bad);
      }
      if (current_.kind == Tok::kComma) {
        advance();
      } else if (current_.kind != Tok::kRParen) {
        fail("expected ',' or ')'", bad);
      }
    }
    advance();  // )

    if (!have_keywords) fail("missing argument keywords", bad);
    if (spec.keywords.empty()) fail("keywords must not be empty", bad);
    if (!exists_to) fail("missing argument exists_to", bad);
    if (!else_to) fail("missing argument else_to", bad);
    spec.exists_to = *exists_to;
    spec.else_to = *else_to;
    return spec;
  }

  std::vector<std::string> parse_keyword_list() {
    const auto bad = GraphError::Kind::kBadArguments;
    if (current_.kind != Tok::kLBracket) fail("expected '[' for keywords", bad);
    advance();
    std::vector<std::string> out;
    while (current_.kind != Tok::kRBracket) {
      if (current_.kind != Tok::kString && current_.kind != Tok::kName) {
        fail("expected keyword string", bad);
      }
      if (current_.text.empty()) fail("empty keyword", bad);
      out.push_back(current_.text);
      advance();
      if (current_.kind == Tok::kComma) {
        advance();
      } else if (current_.kind != Tok::kRBracket) {
        fail("expected ',' or ']' in keywords", bad);
      }
    }
    advance();  // ]
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  Token current_{Tok::kEnd, "", 0};
};

std::vector<NodeId> successors(const DirectionEdge& edge) {
  if (const auto* plain = std::get_if<NodeId>(&edge.to)) return {*plain};
  const auto& r = std::get<RouterSpec>(edge.to);
  return {r.exists_to, r.else_to};
}

std::string dot_id(const std::string& id) {
  bool plain = !id.empty() && !std::isdigit(static_cast<unsigned char>(id[0]));
  for (const char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) {
      plain = false;
    }
  }
  return plain ? id : quote(id);
}

}  // namespace

std::string to_string(const DirectionEdge& edge) {
  std::string out = node_text(edge.from) + " -> ";
  if (const auto* plain = std::get_if<NodeId>(&edge.to)) {
    return out + node_text(*plain);
  }
  const auto& r = std::get<RouterSpec>(edge.to);
  out += "router:any_keyword_route(keywords=[";
  for (std::size_t i = 0; i < r.keywords.size(); ++i) {
    if (i > 0) out += ", ";
    out += quote(r.keywords[i]);
  }
  out += "], exists_to=" + node_text(r.exists_to) +
         ", else_to=" + node_text(r.else_to) + ")";
  return out;
}

DirectionEdge parse_direction(std::string_view text) {
  return DirectionParser(text).parse();
}

const DirectionEdge* WorkflowGraph::outgoing(const NodeId& node) const noexcept {
  const auto it = edge_index_.find(node);
  return it == edge_index_.end() ? nullptr : &edges_[it->second];
}

bool WorkflowGraph::contains(const NodeId& node) const noexcept {
  return std::find(nodes_.begin(), nodes_.end(), node) != nodes_.end();
}

WorkflowGraph build_graph(std::span<const AgentSpec> agents,
                          std::span<const std::string> directions) {
  WorkflowGraph g;
  g.nodes_.push_back(NodeId::start());
  for (const auto& agent : agents) {
    NodeId id(agent.id);
    if (id.is_sentinel()) {
      throw GraphError(GraphError::Kind::kInvalidEdge,
                       "agent id '" + agent.id + "' is reserved");
    }
    g.nodes_.push_back(std::move(id));
  }
  g.nodes_.push_back(NodeId::end());

  for (const auto& text : directions) {
    DirectionEdge edge = parse_direction(text);
    for (const NodeId& n : successors(edge)) {
      if (!g.contains(n)) {
        throw GraphError(GraphError::Kind::kUndefinedNode,
                         "direction '" + text + "' targets undefined agent '" +
                             n.str() + "'");
      }
    }
    if (!g.contains(edge.from)) {
      throw GraphError(GraphError::Kind::kUndefinedNode,
                       "direction '" + text + "' starts at undefined agent '" +
                           edge.from.str() + "'");
    }
    if (g.edge_index_.count(edge.from) != 0) {
      throw GraphError(GraphError::Kind::kDuplicateOutgoing,
                       "node '" + edge.from.str() +
                           "' has more than one outgoing direction");
    }
    g.edge_index_.emplace(edge.from, g.edges_.size());
    g.edges_.push_back(std::move(edge));
  }

  if (g.outgoing(NodeId::start()) == nullptr) {
    throw GraphError(GraphError::Kind::kMissingStart,
                     "no direction leaves START");
  }

  std::set<NodeId> seen{NodeId::start()};
  std::deque<NodeId> queue{NodeId::start()};
  while (!queue.empty()) {
    const NodeId node = queue.front();
    queue.pop_front();
    const DirectionEdge* edge = g.outgoing(node);
    if (edge == nullptr) continue;
    for (const NodeId& next : successors(*edge)) {
      if (seen.insert(next).second) queue.push_back(next);
    }
  }
  if (seen.count(NodeId::end()) == 0) {
    throw GraphError(GraphError::Kind::kEndUnreachable,
                     "END unreachable from START under every router branch");
  }
  for (const NodeId& node : seen) {
    if (!node.is_end() && g.outgoing(node) == nullptr) {
      throw GraphError(GraphError::Kind::kDeadEnd,
                       "agent '" + node.str() +
                           "' is reachable but has no outgoing direction");
    }
  }
  g.agents_per_turn_ = static_cast<int>(std::count_if(
      seen.begin(), seen.end(), [](const NodeId& n) { return !n.is_sentinel(); }));
  return g;
}

std::string casefold(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

bool any_keyword_matches(std::span<const std::string> keywords,
                         std::string_view text) {
  const std::string haystack = casefold(text);
  return std::any_of(keywords.begin(), keywords.end(), [&](const auto& k) {
    return haystack.find(casefold(k)) != std::string::npos;
  });
}

NodeId next_node(const WorkflowGraph& graph, const NodeId& current,
                 std::string_view last_message_text) {
  const DirectionEdge* edge = graph.outgoing(current);
  if (edge == nullptr) {
    throw GraphError(GraphError::Kind::kNoSuccessor,
                     "node '" + current.str() + "' has no outgoing edge");
  }
  if (const auto* plain = std::get_if<NodeId>(&edge->to)) return *plain;
  const auto& r = std::get<RouterSpec>(edge->to);
  return any_keyword_matches(r.keywords, last_message_text) ? r.exists_to
                                                            : r.else_to;
}

std::string to_dot(const WorkflowGraph& graph) {
  std::ostringstream out;
  out << "digraph workflow {\n  rankdir=LR;\n";
  for (const NodeId& n : graph.nodes()) {
    out << "  " << dot_id(n.str());
    if (n.is_start()) {
      out << " [shape=circle]";
    } else if (n.is_end()) {
      out << " [shape=doublecircle]";
    } else {
      out << " [shape=box]";
    }
    out << ";\n";
  }
  for (const DirectionEdge& e : graph.edges()) {
    const std::string from = dot_id(e.from.str());
    if (const auto* plain = std::get_if<NodeId>(&e.to)) {
      out << "  " << from << " -> " << dot_id(plain->str()) << ";\n";
      continue;
    }
    const auto& r = std::get<RouterSpec>(e.to);
    std::string keywords;
    for (std::size_t i = 0; i < r.keywords.size(); ++i) {
      if (i > 0) keywords += ", ";
      keywords += r.keywords[i];
    }
    const std::string label = quote("exists: " + keywords);
    out << "  " << from << " -> " << dot_id(r.exists_to.str())
        << " [label=" << label << "];\n";
    out << "  " << from << " -> " << dot_id(r.else_to.str())
        << " [label=\"else\", style=dashed];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace elmes
