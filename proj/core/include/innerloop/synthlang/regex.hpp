#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "innerloop/util/rng.hpp"

namespace innerloop::synthlang {

// Regex syntax tree over lowercase letters. Nodes are immutable once built
// and shared between copies of a seed.
struct RegexNode;
using NodePtr = std::shared_ptr<const RegexNode>;

struct Literal {
  char ch;
};
struct Concat {
  std::vector<NodePtr> children;
};
// Alternation; sampling picks a branch uniformly.
struct Alt {
  std::vector<NodePtr> children;
};
// Bounded repetition; sampling picks the count uniformly in [min, max].
struct Repeat {
  NodePtr child;
  int min;
  int max;
};

struct RegexNode {
  std::variant<Literal, Concat, Alt, Repeat> kind;
};

NodePtr make_literal(char ch);
NodePtr make_concat(std::vector<NodePtr> children);
NodePtr make_alt(std::vector<NodePtr> children);
NodePtr make_repeat(NodePtr child, int min, int max);

// Knobs for random seed construction. Defaults keep sampled strings short so
// the toy model trains quickly, with enough alternation that a seed's last
// letter is not fixed.
struct GrammarConfig {
  std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
  int max_depth = 3;
  int min_children = 2;
  int max_children = 6;
  int max_repeat = 8;
  // Relative weights for interior nodes below the root.
  double w_literal = 0.35;
  double w_alt = 0.35;
  double w_repeat = 0.2;
  double w_concat = 0.1;
  // Upper bound on (max - min) of a generated Repeat.
  int max_repeat_span = 4;

  void validate() const;
  friend void to_json(nlohmann::json& j, const GrammarConfig& g);
  friend void from_json(const nlohmann::json& j, GrammarConfig& g);
  bool operator==(const GrammarConfig&) const = default;
};

struct RegexSeed {
  int seed_id = 0;
  NodePtr ast;
  std::string display;  // canonical string form
};

// Canonical text form, e.g. "ab(c|d){1,3}". Parses back to an equal tree.
std::string to_canonical(const RegexNode& node);

// Parses the canonical syntax: letters, '|', '(' ')', and "{n}" / "{n,m}".
// Single-child concatenations collapse to the child.
NodePtr parse_regex(std::string_view text);

// Checks the structural invariants: lowercase literals, repeat bounds in
// [0, 8], depth <= 3, 2-6 children for Concat/Alt.
void validate_ast(const RegexNode& node, int max_depth = 3, int max_repeat = 8);

int ast_depth(const RegexNode& node);
// Shortest string length the node can produce.
std::size_t min_length(const RegexNode& node);

// Full-string membership test computed directly over the tree.
bool matches(const RegexNode& node, std::string_view text);

// One random expansion of the tree (uniform branch and repeat choices).
std::string sample_text(const RegexNode& node, Rng& rng);

// Draws n_seeds structurally random trees with distinct canonical strings.
// Deterministic for a given (rng_seed, grammar).
std::vector<RegexSeed> gen_seeds(int n_seeds, std::uint64_t rng_seed, const GrammarConfig& grammar);

RegexSeed seed_from_string(int seed_id, std::string_view text);

}  // namespace innerloop::synthlang
