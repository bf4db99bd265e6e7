#include "innerloop/probes/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "innerloop/error.hpp"
#include "innerloop/util/rng.hpp"

namespace innerloop::probes {

using nn::MatD;

SymEig sym_eig(const MatD& m) {
  if (m.rows() != m.cols()) throw ConfigError("eigendecomposition needs a square matrix");
  const Eigen::Index n = m.rows();
  const double scale = m.cwiseAbs().maxCoeff();
  if (!m.allFinite()) throw NumericError("eigendecomposition input is not finite");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) throw ConfigError("matrix is not symmetric");

  MatD a = (m + m.transpose()) / 2;
  MatD v = MatD::Identity(n, n);
  const double target = 1e-10 * m.norm();
  auto off = [&] {
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  SymEig out;
  for (int sweep = 0; sweep < 100 && off() > target; ++sweep) {
    out.sweeps = sweep + 1;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0) continue;
        // Rotation zeroing a(p, q); t is the smaller root of t^2 + 2 tau t - 1 = 0.
        const double tau = (a(q, q) - a(p, p)) / (2 * apq);
        const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1 + tau * tau));
        const double c = 1 / std::sqrt(1 + t * t);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (off() > target) throw NumericError("Jacobi eigendecomposition did not converge");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

Pca3 pca3(const MatD& points) {
  if (points.rows() < 4) throw ConfigError("PCA needs at least 4 points");
  if (points.cols() < 3) throw ConfigError("PCA to 3 dimensions needs at least 3 input dimensions");
  Pca3 r;
  r.mean = points.colwise().mean().transpose();
  const MatD centered = points.rowwise() - r.mean.transpose();
  const MatD cov = centered.transpose() * centered / static_cast<double>(points.rows() - 1);
  const auto eig = sym_eig(cov);
  r.total_variance = cov.trace();
  r.axes = MatD::Zero(points.cols(), 3);
  r.rank = 0;
  const double floor = 1e-12 * std::max(eig.values(0), 1e-300);
  for (int k = 0; k < 3; ++k) {
    r.variance(k) = std::max(eig.values(k), 0.0);
    if (eig.values(k) <= floor) continue;
    Eigen::VectorXd axis = eig.vectors.col(k);
    Eigen::Index big = 0;
    axis.cwiseAbs().maxCoeff(&big);
    if (axis(big) < 0) axis = -axis;
    r.axes.col(k) = axis;
    ++r.rank;
  }
  if (r.rank < 3)
    r.warning = "data has rank " + std::to_string(r.rank) + " < 3; missing axes are zero";
  r.coords = centered * r.axes;
  return r;
}

Prop1Result prop1_check(const MatD& w, const SymEig& gram, const Eigen::VectorXd& x, double rel_tol) {
  if (w.cols() != x.size()) throw ConfigError("W and x have incompatible shapes");
  if (gram.vectors.rows() != x.size()) throw ConfigError("Gram decomposition does not match x");
  Prop1Result r;
  const Eigen::VectorXd a = gram.vectors.transpose() * x;
  // U is orthonormal, so U^{-1} x = U^T x.
  const Eigen::VectorXd& b = a;
  r.eigen_lhs = (gram.values.array() * a.array() * b.array()).sum();
  r.eigen_rhs = (a.array() * b.array()).sum();
  r.condition_holds = r.eigen_lhs >= r.eigen_rhs;
  r.wx_norm = (w * x).norm();
  r.x_norm = x.norm();
  r.norm_nondec = r.wx_norm >= r.x_norm;
  const double gap = std::abs(r.wx_norm * r.wx_norm - r.x_norm * r.x_norm);
  r.consistent = r.condition_holds == r.norm_nondec || gap <= rel_tol * std::max(r.x_norm * r.x_norm, 1e-300);
  return r;
}

Prop1Result prop1_check(const MatD& w, const Eigen::VectorXd& x, double rel_tol) {
  return prop1_check(w, sym_eig(w.transpose() * w), x, rel_tol);
}

Prop1Sweep prop1_sweep(std::size_t draws, int dim, std::uint64_t seed, double rel_tol) {
  if (dim < 1) throw ConfigError("dimension must be >= 1");
  Rng rng(seed);
  Prop1Sweep s;
  MatD w(dim, dim);
  Eigen::VectorXd x(dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < draws; ++i) {
    for (Eigen::Index r = 0; r < dim; ++r)
      for (Eigen::Index c = 0; c < dim; ++c) w(r, c) = rng.normal() * scale;
    for (Eigen::Index r = 0; r < dim; ++r) x(r) = rng.normal();
    const auto res = prop1_check(w, x, rel_tol);
    ++s.draws;
    s.disagreements += !res.consistent;
    s.condition_holds += res.condition_holds;
    s.near_ties += res.condition_holds != res.norm_nondec;
  }
  return s;
}

}  // namespace innerloop::probes
