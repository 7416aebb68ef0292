#include "emarig/rig_graph.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include <fmt/format.h>

#include "emarig/error.hpp"

namespace emarig {

namespace {

constexpr const char* kModule = "rig";

enum class Tok { Id, LBrace, RBrace, LBracket, RBracket, Semi, Comma, Equals, Arrow, Dash, End };

struct Token {
  Tok kind;
  std::string text;
  int line;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_space_and_comments();
    if (pos_ >= src_.size()) return {Tok::End, "", line_};
    const char c = src_[pos_];
    auto single = [&](Tok k) {
      ++pos_;
      return Token{k, std::string(1, c), line_};
    };
    switch (c) {
      case '{': return single(Tok::LBrace);
      case '}': return single(Tok::RBrace);
      case '[': return single(Tok::LBracket);
      case ']': return single(Tok::RBracket);
      case ';': return single(Tok::Semi);
      case ',': return single(Tok::Comma);
      case '=': return single(Tok::Equals);
      default: break;
    }
    if (c == '-' && pos_ + 1 < src_.size() && (src_[pos_ + 1] == '>' || src_[pos_ + 1] == '-')) {
      const Tok k = src_[pos_ + 1] == '>' ? Tok::Arrow : Tok::Dash;
      pos_ += 2;
      return {k, k == Tok::Arrow ? "->" : "--", line_};
    }
    if (c == '"') return quoted();
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-' ||
        static_cast<unsigned char>(c) >= 0x80) {
      const std::size_t start = pos_;
      while (pos_ < src_.size()) {
        const auto ch = static_cast<unsigned char>(src_[pos_]);
        if (std::isalnum(ch) || ch == '_' || ch == '.' || ch >= 0x80) {
          ++pos_;
        } else if (ch == '-' && pos_ == start) {
          ++pos_;  // leading sign of a numeral
        } else {
          break;
        }
      }
      return {Tok::Id, std::string(src_.substr(start, pos_ - start)), line_};
    }
    throw Error(kModule, "ParseError", fmt::format("line {}: unexpected character '{}'", line_, c));
  }

 private:
  void skip_space_and_comments() {
    bool at_line_start = pos_ == 0 || src_[pos_ - 1] == '\n';
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '\n') {
        ++line_;
        ++pos_;
        at_line_start = true;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '#' && at_line_start) {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else if (src_.compare(pos_, 2, "//") == 0) {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else if (src_.compare(pos_, 2, "/*") == 0) {
        const auto end = src_.find("*/", pos_ + 2);
        if (end == std::string_view::npos) {
          throw Error(kModule, "ParseError", fmt::format("line {}: unterminated comment", line_));
        }
        line_ += static_cast<int>(std::count(src_.begin() + pos_, src_.begin() + end, '\n'));
        pos_ = end + 2;
      } else {
        return;
      }
    }
  }

  Token quoted() {
    const int line = line_;
    std::string text;
    ++pos_;
    while (pos_ < src_.size() && src_[pos_] != '"') {
      if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) ++pos_;
      if (src_[pos_] == '\n') ++line_;
      text += src_[pos_++];
    }
    if (pos_ >= src_.size()) {
      throw Error(kModule, "ParseError", fmt::format("line {}: unterminated string", line));
    }
    ++pos_;
    return {Tok::Id, text, line};
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lex_(text) { advance(); }

  void parse() {
    if (cur_.kind == Tok::Id && lower(cur_.text) == "strict") advance();
    if (cur_.kind != Tok::Id || lower(cur_.text) != "digraph") {
      fail(cur_.kind == Tok::Id && lower(cur_.text) == "graph"
               ? "undirected graphs are not supported, use 'digraph'"
               : "expected 'digraph'");
    }
    advance();
    if (cur_.kind == Tok::Id) advance();  // graph name
    expect(Tok::LBrace, "'{'");
    while (cur_.kind != Tok::RBrace) {
      if (cur_.kind == Tok::End) fail("missing closing '}'");
      statement();
    }
    advance();
    if (cur_.kind != Tok::End) fail("unexpected content after closing '}'");
  }

  std::vector<std::string> nodes;  // first-appearance order
  std::vector<std::pair<int, int>> edges;

 private:
  void statement() {
    if (cur_.kind == Tok::Semi || cur_.kind == Tok::Comma) {
      advance();
      return;
    }
    if (cur_.kind != Tok::Id) fail(fmt::format("unexpected '{}'", cur_.text));
    const std::string kw = lower(cur_.text);
    if (kw == "subgraph") fail("subgraphs are not supported");
    if (kw == "graph" || kw == "node" || kw == "edge") {
      advance();
      if (cur_.kind == Tok::LBracket) attributes();
      return;
    }
    std::string first = cur_.text;
    advance();
    if (cur_.kind == Tok::Equals) {  // graph attribute `key = value`
      advance();
      if (cur_.kind != Tok::Id) fail("expected attribute value");
      advance();
      return;
    }
    int from = node(first);
    while (cur_.kind == Tok::Arrow || cur_.kind == Tok::Dash) {
      if (cur_.kind == Tok::Dash) fail("'--' edges are undirected, use '->'");
      advance();
      if (cur_.kind != Tok::Id) fail("expected node identifier after '->'");
      const int to = node(cur_.text);
      advance();
      edges.emplace_back(from, to);
      from = to;
    }
    if (cur_.kind == Tok::LBracket) attributes();
  }

  void attributes() {
    while (cur_.kind == Tok::LBracket) {
      advance();
      while (cur_.kind != Tok::RBracket) {
        if (cur_.kind == Tok::End) fail("unterminated attribute list");
        advance();
      }
      advance();
    }
  }

  int node(const std::string& name) {
    const auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(name);
    index_[name] = id;
    return id;
  }

  void expect(Tok k, const char* what) {
    if (cur_.kind != k) fail(fmt::format("expected {}", what));
    advance();
  }

  void advance() { cur_ = lex_.next(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(kModule, "ParseError", fmt::format("line {}: {}", cur_.line, what));
  }

  static std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }

  Lexer lex_;
  Token cur_{Tok::End, "", 0};
  std::map<std::string, int> index_;
};

}  // namespace

std::optional<int> RigGraph::find(std::string_view name) const {
  const auto it = std::find(nodes.begin(), nodes.end(), name);
  if (it == nodes.end()) return std::nullopt;
  return static_cast<int>(it - nodes.begin());
}

std::vector<std::pair<std::string, std::string>> RigGraph::edges() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (int c : children[i]) out.emplace_back(nodes[i], nodes[c]);
  }
  return out;
}

RigGraph parse_rig_graph(std::string_view text) {
  Parser p(text);
  p.parse();
  const auto n = static_cast<int>(p.nodes.size());
  if (n == 0) throw Error(kModule, "ParseError", "graph has no nodes");

  std::vector<std::vector<int>> out(n);
  std::vector<int> parent_count(n, 0);
  std::vector<int> parent(n, -1);
  for (const auto& [a, b] : p.edges) {
    if (std::find(out[a].begin(), out[a].end(), b) != out[a].end()) continue;  // repeated edge
    out[a].push_back(b);
    ++parent_count[b];
    parent[b] = a;
  }

  // Cycle detection first so that `A->B; B->A` reports the cycle.
  std::vector<int> state(n, 0);  // 0 unvisited, 1 on stack, 2 done
  for (int s = 0; s < n; ++s) {
    if (state[s]) continue;
    std::vector<std::pair<int, std::size_t>> stack{{s, 0}};
    state[s] = 1;
    while (!stack.empty()) {
      auto& [v, i] = stack.back();
      if (i < out[v].size()) {
        const int w = out[v][i++];
        if (state[w] == 1) {
          throw Error(kModule, "CycleDetected",
                      fmt::format("edge {} -> {} closes a cycle", p.nodes[v], p.nodes[w]));
        }
        if (state[w] == 0) {
          state[w] = 1;
          stack.emplace_back(w, 0);
        }
      } else {
        state[v] = 2;
        stack.pop_back();
      }
    }
  }
  for (int v = 0; v < n; ++v) {
    if (parent_count[v] > 1) {
      throw Error(kModule, "MultipleParents",
                  fmt::format("node '{}' has {} parents", p.nodes[v], parent_count[v]));
    }
  }
  std::vector<int> roots;
  for (int v = 0; v < n; ++v) {
    if (parent_count[v] == 0) roots.push_back(v);
  }
  if (roots.size() != 1) {
    std::string names;
    for (int r : roots) names += (names.empty() ? "" : ", ") + p.nodes[r];
    throw Error(kModule, "MultipleRoots", fmt::format("graph has {} roots: {}", roots.size(), names));
  }

  RigGraph g;
  std::vector<int> new_index(n, -1);
  std::vector<int> order;
  std::vector<int> stack{roots.front()};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    new_index[v] = static_cast<int>(order.size());
    order.push_back(v);
    for (auto it = out[v].rbegin(); it != out[v].rend(); ++it) stack.push_back(*it);
  }
  g.nodes.resize(n);
  g.parent.assign(n, -1);
  g.children.assign(n, {});
  for (int i = 0; i < n; ++i) {
    const int v = order[i];
    g.nodes[i] = p.nodes[v];
    g.parent[i] = parent[v] < 0 ? -1 : new_index[parent[v]];
    for (int c : out[v]) g.children[i].push_back(new_index[c]);
  }
  return g;
}

std::string format_rig_graph(const RigGraph& graph) {
  std::string out = "digraph armature {\n";
  for (const auto& [a, b] : graph.edges()) out += fmt::format("  \"{}\" -> \"{}\";\n", a, b);
  if (graph.size() == 1) out += fmt::format("  \"{}\";\n", graph.nodes.front());
  out += "}\n";
  return out;
}

}  // namespace emarig
