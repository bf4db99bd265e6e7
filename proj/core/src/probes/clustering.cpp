#include "innerloop/probes/clustering.hpp"

#include "innerloop/error.hpp"

namespace innerloop::probes {

ClusterScores cluster_and_score(const nn::MatD& points, const Labels& truth, std::uint64_t rng_seed,
                                const KMeansOptions& options) {
  if (static_cast<std::size_t>(points.rows()) != truth.size()) throw ConfigError("one label per point required");
  int k = 0;
  dense_labels(truth, &k);
  if (k < 2) throw ConfigError("clustering needs at least two distinct labels, got " + std::to_string(k));
  const auto km = kmeans(points, k, rng_seed, options);
  return {pairwise_f1(km.labels, truth), ari(km.labels, truth), ami(km.labels, truth), k};
}

}  // namespace innerloop::probes
