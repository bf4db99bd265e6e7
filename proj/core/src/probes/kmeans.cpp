#include "innerloop/probes/kmeans.hpp"

#include <cmath>
#include <limits>

#include "innerloop/error.hpp"
#include "innerloop/util/rng.hpp"

namespace innerloop::probes {

namespace {

using nn::MatD;

double sq_dist(const MatD& x, Eigen::Index i, const MatD& c, Eigen::Index j) {
  return (x.row(i) - c.row(j)).squaredNorm();
}

// Greedy k-means++: each new center is the best of several D^2 samples.
MatD seed_centers(const MatD& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  const int trials = 2 + static_cast<int>(std::log(k));
  MatD c(k, x.cols());
  c.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd closest(n);
  for (Eigen::Index i = 0; i < n; ++i) closest(i) = sq_dist(x, i, c, 0);
  for (int m = 1; m < k; ++m) {
    const double pot = closest.sum();
    Eigen::Index best = -1;
    double best_pot = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_closest;
    for (int t = 0; t < trials; ++t) {
      Eigen::Index cand = n - 1;
      if (pot > 0) {
        double r = rng.uniform01() * pot;
        for (Eigen::Index i = 0; i < n; ++i) {
          r -= closest(i);
          if (r < 0) {
            cand = i;
            break;
          }
        }
      } else {
        cand = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
      }
      Eigen::VectorXd next(n);
      for (Eigen::Index i = 0; i < n; ++i) next(i) = std::min(closest(i), (x.row(i) - x.row(cand)).squaredNorm());
      const double p = next.sum();
      if (p < best_pot) {
        best_pot = p;
        best = cand;
        best_closest = std::move(next);
      }
    }
    c.row(m) = x.row(best);
    closest = std::move(best_closest);
  }
  return c;
}

double assign(const MatD& x, const MatD& c, std::vector<int>& labels, Eigen::VectorXd& dist) {
  double inertia = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      const double d = sq_dist(x, i, c, j);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(j);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    dist(i) = bd;
    inertia += bd;
  }
  return inertia;
}

KMeansResult lloyd(const MatD& x, MatD centers, double tol, int max_iter) {
  const Eigen::Index n = x.rows();
  const auto k = centers.rows();
  KMeansResult r;
  r.labels.assign(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd dist(n);
  r.inertia = assign(x, centers, r.labels, dist);
  r.inertia_trace.push_back(r.inertia);
  for (int it = 0; it < max_iter; ++it) {
    MatD next = MatD::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(r.labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(r.labels[static_cast<std::size_t>(i)])];
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        next.row(j) /= counts[static_cast<std::size_t>(j)];
        continue;
      }
      // Empty cluster: move it onto the point farthest from its center.
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      next.row(j) = x.row(far);
      dist(far) = 0;
    }
    const double shift = (next - centers).squaredNorm();
    centers = std::move(next);
    const auto previous = r.labels;
    r.inertia = assign(x, centers, r.labels, dist);
    r.inertia_trace.push_back(r.inertia);
    r.iterations = it + 1;
    if (r.labels == previous || shift <= tol) break;
  }
  r.centroids = std::move(centers);
  return r;
}

}  // namespace

KMeansResult kmeans(const MatD& points, int k, std::uint64_t rng_seed, const KMeansOptions& options) {
  if (k < 1) throw ConfigError("k-means needs k >= 1");
  if (points.rows() < k)
    throw ConfigError("k-means with k = " + std::to_string(k) + " needs at least that many points, got " +
                      std::to_string(points.rows()));
  if (options.n_init < 1 || options.max_iter < 1) throw ConfigError("k-means needs n_init >= 1 and max_iter >= 1");
  if (!points.allFinite()) throw NumericError("k-means input contains non-finite values");

  const Eigen::RowVectorXd mean = points.colwise().mean();
  const double mean_var = (points.rowwise() - mean).array().square().colwise().mean().mean();
  const double tol = options.tol * mean_var;

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int run = 0; run < options.n_init; ++run) {
    Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(run)));
    auto r = lloyd(points, seed_centers(points, k, rng), tol, options.max_iter);
    if (r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

}  // namespace innerloop::probes
