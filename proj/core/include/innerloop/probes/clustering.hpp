#pragma once

#include <cstdint>
#include <vector>

#include "innerloop/nn/params.hpp"
#include "innerloop/probes/kmeans.hpp"
#include "innerloop/probes/metrics.hpp"

namespace innerloop::probes {

struct ClusterScores {
  double f1 = 0.0;
  double ari = 0.0;
  double ami = 0.0;
  int k = 0;
};

// k-means with k = number of distinct truth labels, scored against them.
ClusterScores cluster_and_score(const nn::MatD& points, const Labels& truth, std::uint64_t rng_seed,
                                const KMeansOptions& options = {});

}  // namespace innerloop::probes
