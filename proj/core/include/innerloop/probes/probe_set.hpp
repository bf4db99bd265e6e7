#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "innerloop/nn/any_model.hpp"
#include "innerloop/synthlang/dataset.hpp"

namespace innerloop::probes {

enum class PositionPolicy {
  kLastToken,     // the last position whose target is a letter
  kFromPosition,  // every position >= min_position (0-based index + 1)
  kAll,
};

std::string to_string(PositionPolicy p);
PositionPolicy position_policy_from_string(const std::string& s);

enum class GroundTruthKind { kSeed, kNextToken, kCombination };

std::string to_string(GroundTruthKind k);
GroundTruthKind ground_truth_from_string(const std::string& s);

// One probed token: position i of a sequence, predicting token i + 1.
struct ProbeInstance {
  std::uint32_t sequence = 0;
  int position = 0;
  int seed = 0;
  int next_token = 0;
};

struct ProbeSelection {
  PositionPolicy policy = PositionPolicy::kLastToken;
  int min_position = 5;  // for kFromPosition; 5 = fifth position onward
};

std::vector<ProbeInstance> select_instances(const std::vector<synthlang::TokenSequence>& sequences,
                                            const ProbeSelection& selection);

// Dense labels for the chosen ground truth. Combination labels number the
// distinct (seed, next token) pairs in order of first appearance.
std::vector<int> ground_truth(const std::vector<ProbeInstance>& instances, GroundTruthKind kind);

// Combination label shared by the history analyses: seed * vocab + token.
inline int combination_key(int seed, int next_token, int vocab) { return seed * vocab + next_token; }

// Representations of every instance at every layer: element l is an
// (instances x d_model) matrix of z^l, l = 0 (embedding output) .. L.
// With final_norm the model's final norm is applied to each row.
struct LayerRepresentations {
  std::vector<nn::MatD> z;
};
LayerRepresentations collect_representations(const nn::Model& model,
                                             const std::vector<synthlang::TokenSequence>& sequences,
                                             const std::vector<ProbeInstance>& instances, bool final_norm = false);

}  // namespace innerloop::probes
