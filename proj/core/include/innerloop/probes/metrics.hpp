#pragma once

#include <vector>

namespace innerloop::probes {

// Cluster assignment per instance. Label values are arbitrary integers.
using Labels = std::vector<int>;

// Pair-counting F1: precision over pairs grouped together by `pred`,
// recall over pairs grouped together by `truth`.
double pairwise_f1(const Labels& pred, const Labels& truth);

// Adjusted Rand index (pair-count form).
double ari(const Labels& pred, const Labels& truth);

// Adjusted mutual information, arithmetic-mean normalization, expected MI
// under the hypergeometric permutation model.
double ami(const Labels& pred, const Labels& truth);

// Relabels to 0..k-1 in order of first appearance.
Labels dense_labels(const Labels& labels, int* k = nullptr);

}  // namespace innerloop::probes
