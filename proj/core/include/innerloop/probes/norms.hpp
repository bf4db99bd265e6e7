#pragma once

#include <cstddef>
#include <vector>

namespace innerloop::probes {

// Norms of one token's representation, starting at the embedding output.
using NormTrajectory = std::vector<double>;

struct NormStats {
  double pair_level = 0.0;      // fraction of non-decreasing neighbor pairs
  double sequence_level = 0.0;  // fraction of fully non-decreasing trajectories
  std::size_t pairs = 0;
  std::size_t trajectories = 0;
};

// Ties count as non-decreasing. With exclude_last the final entry of each
// trajectory is dropped first.
NormStats norm_stats(const std::vector<NormTrajectory>& trajectories, bool exclude_last);

}  // namespace innerloop::probes
