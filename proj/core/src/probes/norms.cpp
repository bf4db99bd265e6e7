#include "innerloop/probes/norms.hpp"

#include <cmath>

#include "innerloop/error.hpp"

namespace innerloop::probes {

NormStats norm_stats(const std::vector<NormTrajectory>& trajectories, bool exclude_last) {
  if (trajectories.empty()) throw ConfigError("norm statistics need at least one trajectory");
  NormStats s;
  std::size_t good_pairs = 0, good_seqs = 0;
  for (const auto& t : trajectories) {
    const std::size_t len = exclude_last ? t.size() - 1 : t.size();
    if (t.empty() || len < 2)
      throw ConfigError("norm trajectory of length " + std::to_string(t.size()) + " is too short" +
                        (exclude_last ? " after dropping the last layer" : ""));
    for (std::size_t i = 0; i < len; ++i)
      if (!std::isfinite(t[i]) || t[i] < 0) throw NumericError("norm trajectory holds an invalid norm");
    bool all = true;
    for (std::size_t i = 0; i + 1 < len; ++i) {
      const bool ok = t[i + 1] >= t[i];
      good_pairs += ok;
      all = all && ok;
    }
    good_seqs += all;
    s.pairs += len - 1;
  }
  s.trajectories = trajectories.size();
  s.pair_level = static_cast<double>(good_pairs) / static_cast<double>(s.pairs);
  s.sequence_level = static_cast<double>(good_seqs) / static_cast<double>(s.trajectories);
  return s;
}

}  // namespace innerloop::probes
