#include "innerloop/probes/probe_set.hpp"

#include <map>

#include "innerloop/error.hpp"

namespace innerloop::probes {

std::string to_string(PositionPolicy p) {
  switch (p) {
    case PositionPolicy::kLastToken:
      return "last_token";
    case PositionPolicy::kFromPosition:
      return "from_position";
    case PositionPolicy::kAll:
      return "all";
  }
  return "?";
}

PositionPolicy position_policy_from_string(const std::string& s) {
  if (s == "last_token") return PositionPolicy::kLastToken;
  if (s == "from_position") return PositionPolicy::kFromPosition;
  if (s == "all") return PositionPolicy::kAll;
  throw ConfigError("unknown position policy '" + s + "' (expected last_token, from_position or all)");
}

std::string to_string(GroundTruthKind k) {
  switch (k) {
    case GroundTruthKind::kSeed:
      return "seed";
    case GroundTruthKind::kNextToken:
      return "next_token";
    case GroundTruthKind::kCombination:
      return "combination";
  }
  return "?";
}

GroundTruthKind ground_truth_from_string(const std::string& s) {
  if (s == "seed") return GroundTruthKind::kSeed;
  if (s == "next_token") return GroundTruthKind::kNextToken;
  if (s == "combination") return GroundTruthKind::kCombination;
  throw ConfigError("unknown ground truth '" + s + "' (expected seed, next_token or combination)");
}

std::vector<ProbeInstance> select_instances(const std::vector<synthlang::TokenSequence>& sequences,
                                            const ProbeSelection& sel) {
  if (sel.policy == PositionPolicy::kFromPosition && sel.min_position < 1)
    throw ConfigError("minimum probe position must be >= 1");
  std::vector<ProbeInstance> out;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    const int positions = static_cast<int>(seq.tokens.size()) - 1;
    if (positions < 1) continue;
    auto add = [&](int i) {
      out.push_back({static_cast<std::uint32_t>(s), i, seq.seed_id, seq.tokens[static_cast<std::size_t>(i + 1)]});
    };
    switch (sel.policy) {
      case PositionPolicy::kLastToken:
        // The final position predicts EOS for every sequence; the one before
        // it predicts the last letter.
        if (positions >= 2) add(positions - 2);
        break;
      case PositionPolicy::kFromPosition:
        for (int i = sel.min_position - 1; i < positions; ++i) add(i);
        break;
      case PositionPolicy::kAll:
        for (int i = 0; i < positions; ++i) add(i);
        break;
    }
  }
  return out;
}

std::vector<int> ground_truth(const std::vector<ProbeInstance>& instances, GroundTruthKind kind) {
  std::map<std::pair<int, int>, int> ids;
  std::vector<int> out;
  out.reserve(instances.size());
  for (const auto& in : instances) {
    switch (kind) {
      case GroundTruthKind::kSeed:
        out.push_back(in.seed);
        break;
      case GroundTruthKind::kNextToken:
        out.push_back(in.next_token);
        break;
      case GroundTruthKind::kCombination:
        out.push_back(ids.try_emplace({in.seed, in.next_token}, static_cast<int>(ids.size())).first->second);
        break;
    }
  }
  return out;
}

LayerRepresentations collect_representations(const nn::Model& model,
                                             const std::vector<synthlang::TokenSequence>& sequences,
                                             const std::vector<ProbeInstance>& instances, bool final_norm) {
  if (instances.empty()) throw ConfigError("no probe instances selected");
  const auto& c = model.config();
  LayerRepresentations out;
  out.z.assign(static_cast<std::size_t>(c.n_layers + 1), nn::MatD(static_cast<Eigen::Index>(instances.size()), c.d_model));
  std::size_t i = 0;
  while (i < instances.size()) {
    const auto seq = instances[i].sequence;
    if (seq >= sequences.size()) throw ConfigError("probe instance refers to a missing sequence");
    const auto trace = model.probe(sequences[seq].tokens);
    for (; i < instances.size() && instances[i].sequence == seq; ++i) {
      for (std::size_t l = 0; l < out.z.size(); ++l)
        out.z[l].row(static_cast<Eigen::Index>(i)) = trace.z[l].row(instances[i].position);
    }
  }
  if (final_norm)
    for (auto& z : out.z) z = model.final_norm(z);
  return out;
}

}  // namespace innerloop::probes
