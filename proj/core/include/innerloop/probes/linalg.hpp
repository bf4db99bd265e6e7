#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "innerloop/nn/params.hpp"

namespace innerloop::probes {

struct SymEig {
  Eigen::VectorXd values;  // descending
  nn::MatD vectors;        // columns are eigenvectors
  int sweeps = 0;
};

// Cyclic Jacobi rotations. Rejects inputs with
// max|M - M^T| > 1e-8 * max|M|.
SymEig sym_eig(const nn::MatD& m);

struct Pca3 {
  Eigen::VectorXd mean;
  nn::MatD axes;                  // dim x 3, orthonormal columns (zero when padded)
  Eigen::Vector3d variance;       // eigenvalues of the covariance
  double total_variance = 0.0;
  nn::MatD coords;                // n x 3
  int rank = 3;                   // < 3 when axes were padded
  std::string warning;
};

// Rows of `points` are observations. Each axis is signed so that its
// largest-magnitude component is positive.
Pca3 pca3(const nn::MatD& points);

struct Prop1Result {
  bool condition_holds = false;  // sum lambda_i a_i b_i >= sum a_i b_i
  bool norm_nondec = false;      // |Wx| >= |x|
  bool consistent = false;
  double eigen_lhs = 0.0;
  double eigen_rhs = 0.0;
  double wx_norm = 0.0;
  double x_norm = 0.0;
};

// Checks the Gram-matrix eigenvalue condition against the direct norm
// comparison. Verdicts that differ only inside `rel_tol` count as consistent.
Prop1Result prop1_check(const nn::MatD& w, const Eigen::VectorXd& x, double rel_tol = 1e-9);
// Same, reusing a precomputed decomposition of W^T W.
Prop1Result prop1_check(const nn::MatD& w, const SymEig& gram, const Eigen::VectorXd& x, double rel_tol = 1e-9);

struct Prop1Sweep {
  std::size_t draws = 0;
  std::size_t disagreements = 0;  // inconsistent verdicts
  std::size_t condition_holds = 0;
  std::size_t near_ties = 0;      // verdicts differing only inside the tolerance
};

// Random W (entries N(0, 1/dim)) and x (N(0, 1)) draws through prop1_check.
Prop1Sweep prop1_sweep(std::size_t draws, int dim, std::uint64_t seed, double rel_tol = 1e-9);

}  // namespace innerloop::probes
