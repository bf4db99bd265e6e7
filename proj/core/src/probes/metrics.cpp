#include "innerloop/probes/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "innerloop/error.hpp"

namespace innerloop::probes {

Labels dense_labels(const Labels& labels, int* k) {
  std::unordered_map<int, int> ids;
  Labels out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids.try_emplace(l, static_cast<int>(ids.size())).first->second);
  if (k) *k = static_cast<int>(ids.size());
  return out;
}

namespace {

struct Contingency {
  std::vector<std::vector<double>> n;  // pred cluster x truth class
  std::vector<double> a, b;            // row and column sums
  double total = 0.0;
};

Contingency contingency(const Labels& pred, const Labels& truth) {
  if (pred.size() != truth.size())
    throw ConfigError("partition sizes differ: " + std::to_string(pred.size()) + " vs " +
                      std::to_string(truth.size()));
  int kp = 0, kt = 0;
  const auto p = dense_labels(pred, &kp);
  const auto t = dense_labels(truth, &kt);
  Contingency c;
  c.n.assign(static_cast<std::size_t>(kp), std::vector<double>(static_cast<std::size_t>(kt), 0.0));
  c.a.assign(static_cast<std::size_t>(kp), 0.0);
  c.b.assign(static_cast<std::size_t>(kt), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.n[static_cast<std::size_t>(p[i])][static_cast<std::size_t>(t[i])] += 1;
    c.a[static_cast<std::size_t>(p[i])] += 1;
    c.b[static_cast<std::size_t>(t[i])] += 1;
  }
  c.total = static_cast<double>(p.size());
  return c;
}

double pairs(double m) { return m * (m - 1) / 2; }

struct PairCounts {
  double both = 0, pred = 0, truth = 0;
};

PairCounts pair_counts(const Contingency& c) {
  PairCounts r;
  for (const auto& row : c.n)
    for (double v : row) r.both += pairs(v);
  for (double v : c.a) r.pred += pairs(v);
  for (double v : c.b) r.truth += pairs(v);
  return r;
}

bool same_partition(const Labels& x, const Labels& y) { return dense_labels(x) == dense_labels(y); }

double entropy(const std::vector<double>& sizes, double n) {
  double h = 0;
  for (double s : sizes)
    if (s > 0) h -= s / n * std::log(s / n);
  return h;
}

}  // namespace

double pairwise_f1(const Labels& pred, const Labels& truth) {
  const auto pc = pair_counts(contingency(pred, truth));
  if (pc.pred == 0 && pc.truth == 0) return 1.0;
  if (pc.pred == 0 || pc.truth == 0 || pc.both == 0) return 0.0;
  const double precision = pc.both / pc.pred;
  const double recall = pc.both / pc.truth;
  return 2 * precision * recall / (precision + recall);
}

double ari(const Labels& pred, const Labels& truth) {
  const auto c = contingency(pred, truth);
  if (c.total < 2) return 1.0;
  const auto pc = pair_counts(c);
  const double expected = pc.pred * pc.truth / pairs(c.total);
  const double max_index = (pc.pred + pc.truth) / 2;
  if (max_index == expected) return 1.0;
  return (pc.both - expected) / (max_index - expected);
}

double ami(const Labels& pred, const Labels& truth) {
  const auto c = contingency(pred, truth);
  const double n = c.total;
  if ((c.a.size() == 1 && c.b.size() == 1) || n == 0) return 1.0;
  if (same_partition(pred, truth)) return 1.0;

  double mi = 0;
  for (std::size_t i = 0; i < c.a.size(); ++i)
    for (std::size_t j = 0; j < c.b.size(); ++j) {
      const double nij = c.n[i][j];
      if (nij > 0) mi += nij / n * std::log(n * nij / (c.a[i] * c.b[j]));
    }

  // Expected MI: sum over the hypergeometric support of each cell.
  const double lg_n = std::lgamma(n + 1);
  double emi = 0;
  for (double ai : c.a)
    for (double bj : c.b) {
      const double lo = std::max(1.0, ai + bj - n);
      const double hi = std::min(ai, bj);
      const double base = std::lgamma(ai + 1) + std::lgamma(bj + 1) + std::lgamma(n - ai + 1) +
                          std::lgamma(n - bj + 1) - lg_n;
      for (double nij = lo; nij <= hi; nij += 1) {
        const double log_p = base - std::lgamma(nij + 1) - std::lgamma(ai - nij + 1) - std::lgamma(bj - nij + 1) -
                             std::lgamma(n - ai - bj + nij + 1);
        emi += nij / n * std::log(n * nij / (ai * bj)) * std::exp(log_p);
      }
    }

  const double normalizer = (entropy(c.a, n) + entropy(c.b, n)) / 2;
  double denom = normalizer - emi;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  denom = denom < 0 ? std::min(denom, -eps) : std::max(denom, eps);
  return (mi - emi) / denom;
}

}  // namespace innerloop::probes
