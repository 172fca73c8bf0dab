#pragma once

#include <cstdint>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace tagemb {

struct SvdOptions {
  // Convergence: Ritz residuals and the relative change of the leading singular
  // values both drop below this tolerance.
  double tolerance = 1e-10;
  int max_iterations = 10000;
  std::uint64_t seed = 0x15a7c0ffeeULL;
};

// Leading k singular triplets: a ~= left * diag(values) * right^T.
struct SvdResult {
  Eigen::MatrixXd left;    // m x k, orthonormal columns
  Eigen::VectorXd values;  // k, nonincreasing, nonnegative
  Eigen::MatrixXd right;   // n x k, orthonormal columns
  int iterations = 0;
  double residual = 0.0;   // largest Ritz residual relative to the top singular value
};

// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization. Works on
// the sparse matrix through products only. Throws ParameterError when k is outside
// [1, min(m, n)] and ConvergenceError when the iteration budget runs out.
SvdResult truncated_svd(const Eigen::SparseMatrix<double>& a, int k, const SvdOptions& options = {});
SvdResult truncated_svd(const Eigen::MatrixXd& a, int k, const SvdOptions& options = {});

Eigen::MatrixXd reconstruct(const SvdResult& svd);

}  // namespace tagemb
