#include "innerloop/synthlang/regex.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "innerloop/error.hpp"

namespace innerloop::synthlang {

NodePtr make_literal(char ch) { return std::make_shared<RegexNode>(RegexNode{Literal{ch}}); }
NodePtr make_concat(std::vector<NodePtr> children) {
  return std::make_shared<RegexNode>(RegexNode{Concat{std::move(children)}});
}
NodePtr make_alt(std::vector<NodePtr> children) {
  return std::make_shared<RegexNode>(RegexNode{Alt{std::move(children)}});
}
NodePtr make_repeat(NodePtr child, int min, int max) {
  return std::make_shared<RegexNode>(RegexNode{Repeat{std::move(child), min, max}});
}

void GrammarConfig::validate() const {
  if (alphabet.empty()) throw ConfigError("grammar alphabet is empty");
  for (char c : alphabet) {
    if (c < 'a' || c > 'z') throw ConfigError(std::string("grammar alphabet has non-lowercase character '") + c + "'");
  }
  if (max_depth < 1 || max_depth > 3) throw ConfigError("grammar max_depth must be in [1, 3]");
  if (min_children < 2 || max_children > 6 || min_children > max_children)
    throw ConfigError("grammar children bounds must satisfy 2 <= min <= max <= 6");
  if (max_repeat < 0 || max_repeat > 8) throw ConfigError("grammar max_repeat must be in [0, 8]");
  if (max_repeat_span < 0) throw ConfigError("grammar max_repeat_span must be >= 0");
  if (w_literal < 0 || w_alt < 0 || w_repeat < 0 || w_concat < 0 ||
      w_literal + w_alt + w_repeat + w_concat <= 0)
    throw ConfigError("grammar node weights must be non-negative with a positive sum");
}

void to_json(nlohmann::json& j, const GrammarConfig& g) {
  j = nlohmann::json{{"alphabet", g.alphabet},         {"max_depth", g.max_depth},
                     {"min_children", g.min_children}, {"max_children", g.max_children},
                     {"max_repeat", g.max_repeat},     {"max_repeat_span", g.max_repeat_span},
                     {"w_literal", g.w_literal},       {"w_alt", g.w_alt},
                     {"w_repeat", g.w_repeat},         {"w_concat", g.w_concat}};
}

void from_json(const nlohmann::json& j, GrammarConfig& g) {
  GrammarConfig d;
  g.alphabet = j.value("alphabet", d.alphabet);
  g.max_depth = j.value("max_depth", d.max_depth);
  g.min_children = j.value("min_children", d.min_children);
  g.max_children = j.value("max_children", d.max_children);
  g.max_repeat = j.value("max_repeat", d.max_repeat);
  g.max_repeat_span = j.value("max_repeat_span", d.max_repeat_span);
  g.w_literal = j.value("w_literal", d.w_literal);
  g.w_alt = j.value("w_alt", d.w_alt);
  g.w_repeat = j.value("w_repeat", d.w_repeat);
  g.w_concat = j.value("w_concat", d.w_concat);
}

namespace {

bool needs_group(const RegexNode& child, const RegexNode& parent) {
  const bool child_compound = !std::holds_alternative<Literal>(child.kind);
  if (std::holds_alternative<Repeat>(parent.kind)) return child_compound;
  if (std::holds_alternative<Concat>(parent.kind))
    return std::holds_alternative<Alt>(child.kind) || std::holds_alternative<Concat>(child.kind);
  if (std::holds_alternative<Alt>(parent.kind)) return std::holds_alternative<Alt>(child.kind);
  return false;
}

void write_canonical(const RegexNode& node, std::string& out) {
  auto child_text = [&](const NodePtr& c) {
    if (needs_group(*c, node)) {
      out.push_back('(');
      write_canonical(*c, out);
      out.push_back(')');
    } else {
      write_canonical(*c, out);
    }
  };
  std::visit(
      [&](const auto& n) {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, Literal>) {
          out.push_back(n.ch);
        } else if constexpr (std::is_same_v<N, Concat>) {
          for (const auto& c : n.children) child_text(c);
        } else if constexpr (std::is_same_v<N, Alt>) {
          for (std::size_t i = 0; i < n.children.size(); ++i) {
            if (i) out.push_back('|');
            child_text(n.children[i]);
          }
        } else {
          child_text(n.child);
          out.push_back('{');
          out += std::to_string(n.min);
          if (n.max != n.min) {
            out.push_back(',');
            out += std::to_string(n.max);
          }
          out.push_back('}');
        }
      },
      node.kind);
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  NodePtr parse() {
    auto node = parse_alt();
    if (pos_ != text_.size()) fail("unexpected character");
    return node;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("regex parse error at offset " + std::to_string(pos_) + " in \"" +
                      std::string(text_) + "\": " + what);
  }

  bool at(char c) const { return pos_ < text_.size() && text_[pos_] == c; }

  NodePtr parse_alt() {
    std::vector<NodePtr> branches{parse_concat()};
    while (at('|')) {
      ++pos_;
      branches.push_back(parse_concat());
    }
    return branches.size() == 1 ? branches.front() : make_alt(std::move(branches));
  }

  NodePtr parse_concat() {
    std::vector<NodePtr> items;
    while (pos_ < text_.size() && (at('(') || (text_[pos_] >= 'a' && text_[pos_] <= 'z'))) {
      items.push_back(parse_repeat());
    }
    if (items.empty()) fail("empty expression");
    return items.size() == 1 ? items.front() : make_concat(std::move(items));
  }

  int parse_int() {
    const std::size_t start = pos_;
    int v = 0;
    while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
      v = v * 10 + (text_[pos_] - '0');
      if (v > 1000) fail("repeat bound too large");
      ++pos_;
    }
    if (pos_ == start) fail("expected integer");
    return v;
  }

  NodePtr parse_repeat() {
    NodePtr atom;
    if (at('(')) {
      ++pos_;
      atom = parse_alt();
      if (!at(')')) fail("expected ')'");
      ++pos_;
    } else {
      atom = make_literal(text_[pos_++]);
    }
    if (at('{')) {
      ++pos_;
      const int lo = parse_int();
      int hi = lo;
      if (at(',')) {
        ++pos_;
        hi = parse_int();
      }
      if (!at('}')) fail("expected '}'");
      ++pos_;
      if (hi < lo) fail("repeat max below min");
      atom = make_repeat(std::move(atom), lo, hi);
    }
    return atom;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// Sorted set of end offsets reachable by matching `node` from `start`.
std::vector<std::size_t> match_ends(const RegexNode& node, std::string_view text, std::size_t start) {
  return std::visit(
      [&](const auto& n) -> std::vector<std::size_t> {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, Literal>) {
          if (start < text.size() && text[start] == n.ch) return {start + 1};
          return {};
        } else if constexpr (std::is_same_v<N, Concat>) {
          std::vector<std::size_t> cur{start};
          for (const auto& c : n.children) {
            std::set<std::size_t> next;
            for (auto p : cur) {
              for (auto e : match_ends(*c, text, p)) next.insert(e);
            }
            cur.assign(next.begin(), next.end());
            if (cur.empty()) break;
          }
          return cur;
        } else if constexpr (std::is_same_v<N, Alt>) {
          std::set<std::size_t> all;
          for (const auto& c : n.children) {
            for (auto e : match_ends(*c, text, start)) all.insert(e);
          }
          return {all.begin(), all.end()};
        } else {
          std::set<std::size_t> result;
          std::vector<std::size_t> cur{start};
          if (n.min == 0) result.insert(start);
          for (int count = 1; count <= n.max && !cur.empty(); ++count) {
            std::set<std::size_t> next;
            for (auto p : cur) {
              for (auto e : match_ends(*n.child, text, p)) next.insert(e);
            }
            cur.assign(next.begin(), next.end());
            if (count >= n.min) result.insert(cur.begin(), cur.end());
          }
          return {result.begin(), result.end()};
        }
      },
      node.kind);
}

void sample_into(const RegexNode& node, Rng& rng, std::string& out) {
  std::visit(
      [&](const auto& n) {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, Literal>) {
          out.push_back(n.ch);
        } else if constexpr (std::is_same_v<N, Concat>) {
          for (const auto& c : n.children) sample_into(*c, rng, out);
        } else if constexpr (std::is_same_v<N, Alt>) {
          sample_into(*n.children[rng.below(n.children.size())], rng, out);
        } else {
          const auto count = rng.range(n.min, n.max);
          for (std::int64_t i = 0; i < count; ++i) sample_into(*n.child, rng, out);
        }
      },
      node.kind);
}

class TreeBuilder {
 public:
  TreeBuilder(const GrammarConfig& g, Rng& rng) : g_(g), rng_(rng) {}

  NodePtr root() {
    if (g_.max_depth == 1) return literal();
    return make_concat(children(1));
  }

 private:
  NodePtr literal() { return make_literal(g_.alphabet[rng_.below(g_.alphabet.size())]); }

  std::vector<NodePtr> children(int depth) {
    const auto k = rng_.range(g_.min_children, g_.max_children);
    std::vector<NodePtr> out;
    out.reserve(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < k; ++i) out.push_back(node(depth + 1));
    return out;
  }

  NodePtr node(int depth) {
    if (depth >= g_.max_depth) return literal();
    const double total = g_.w_literal + g_.w_alt + g_.w_repeat + g_.w_concat;
    double r = rng_.uniform01() * total;
    if ((r -= g_.w_literal) < 0) return literal();
    if ((r -= g_.w_alt) < 0) return make_alt(children(depth));
    if ((r -= g_.w_repeat) < 0) {
      auto child = node(depth + 1);
      const int lo = static_cast<int>(rng_.range(0, std::min(3, g_.max_repeat)));
      const int hi = static_cast<int>(rng_.range(lo, std::min(g_.max_repeat, lo + g_.max_repeat_span)));
      return make_repeat(std::move(child), lo, hi);
    }
    return make_concat(children(depth));
  }

  const GrammarConfig& g_;
  Rng& rng_;
};

}  // namespace

std::string to_canonical(const RegexNode& node) {
  std::string out;
  write_canonical(node, out);
  return out;
}

NodePtr parse_regex(std::string_view text) { return Parser(text).parse(); }

int ast_depth(const RegexNode& node) {
  return std::visit(
      [](const auto& n) -> int {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, Literal>) {
          return 1;
        } else if constexpr (std::is_same_v<N, Repeat>) {
          return 1 + ast_depth(*n.child);
        } else {
          int d = 0;
          for (const auto& c : n.children) d = std::max(d, ast_depth(*c));
          return 1 + d;
        }
      },
      node.kind);
}

void validate_ast(const RegexNode& node, int max_depth, int max_repeat) {
  if (ast_depth(node) > max_depth)
    throw ConfigError("regex depth " + std::to_string(ast_depth(node)) + " exceeds " + std::to_string(max_depth));
  std::visit(
      [&](const auto& n) {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, Literal>) {
          if (n.ch < 'a' || n.ch > 'z') throw ConfigError("regex literal outside a-z");
        } else if constexpr (std::is_same_v<N, Repeat>) {
          if (n.min < 0 || n.min > n.max || n.max > max_repeat) throw ConfigError("regex repeat bounds invalid");
          validate_ast(*n.child, max_depth, max_repeat);
        } else {
          if (n.children.size() < 2 || n.children.size() > 6)
            throw ConfigError("regex Concat/Alt must have 2-6 children");
          for (const auto& c : n.children) validate_ast(*c, max_depth, max_repeat);
        }
      },
      node.kind);
}

std::size_t min_length(const RegexNode& node) {
  return std::visit(
      [](const auto& n) -> std::size_t {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, Literal>) {
          return 1;
        } else if constexpr (std::is_same_v<N, Concat>) {
          std::size_t s = 0;
          for (const auto& c : n.children) s += min_length(*c);
          return s;
        } else if constexpr (std::is_same_v<N, Alt>) {
          std::size_t m = SIZE_MAX;
          for (const auto& c : n.children) m = std::min(m, min_length(*c));
          return m;
        } else {
          return static_cast<std::size_t>(n.min) * min_length(*n.child);
        }
      },
      node.kind);
}

bool matches(const RegexNode& node, std::string_view text) {
  const auto ends = match_ends(node, text, 0);
  return std::binary_search(ends.begin(), ends.end(), text.size());
}

std::string sample_text(const RegexNode& node, Rng& rng) {
  std::string out;
  sample_into(node, rng, out);
  return out;
}

RegexSeed seed_from_string(int seed_id, std::string_view text) {
  auto ast = parse_regex(text);
  auto display = to_canonical(*ast);
  return RegexSeed{seed_id, std::move(ast), std::move(display)};
}

std::vector<RegexSeed> gen_seeds(int n_seeds, std::uint64_t rng_seed, const GrammarConfig& grammar) {
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  grammar.validate();
  Rng rng(rng_seed);
  TreeBuilder builder(grammar, rng);
  std::vector<RegexSeed> seeds;
  std::unordered_set<std::string> seen;
  const int budget = 1000 * n_seeds;
  int attempts = 0;
  while (static_cast<int>(seeds.size()) < n_seeds) {
    if (++attempts > budget)
      throw ConfigError("could not draw " + std::to_string(n_seeds) +
                        " distinct regex seeds; the grammar is too small");
    auto ast = builder.root();
    auto display = to_canonical(*ast);
    if (!seen.insert(display).second) continue;
    seeds.push_back(RegexSeed{static_cast<int>(seeds.size()), std::move(ast), std::move(display)});
  }
  return seeds;
}

}  // namespace innerloop::synthlang
