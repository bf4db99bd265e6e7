#pragma once

#include <cstdint>
#include <vector>

#include "innerloop/nn/params.hpp"

namespace innerloop::probes {

struct KMeansOptions {
  int n_init = 10;
  int max_iter = 300;
  // Scaled by the mean per-feature variance of the data.
  double tol = 1e-4;
};

struct KMeansResult {
  std::vector<int> labels;
  nn::MatD centroids;  // k x dim
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_trace;  // per Lloyd iteration of the winning restart
};

// k-means++ seeding, Lloyd iterations, best of n_init restarts by inertia.
// Rows of `points` are instances. Empty clusters are re-seeded with the point
// farthest from its centroid.
KMeansResult kmeans(const nn::MatD& points, int k, std::uint64_t rng_seed, const KMeansOptions& options = {});

}  // namespace innerloop::probes
