#include "tagemb/svd.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "tagemb/error.hpp"
#include "tagemb/random.hpp"

namespace tagemb {

namespace {

// Products with a matrix or its transpose; `transposed` swaps the two so that the
// recurrence always starts in the smaller dimension.
template <typename Matrix>
struct Operator {
  const Matrix& a;
  bool transposed;

  Eigen::Index rows() const { return transposed ? a.cols() : a.rows(); }
  Eigen::Index cols() const { return transposed ? a.rows() : a.cols(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    if (transposed) return a.transpose() * x;
    return a * x;
  }
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& y) const {
    if (transposed) return a * y;
    return a.transpose() * y;
  }
};

// Removes the components along the first `count` columns of `basis` (two passes).
void orthogonalize(Eigen::VectorXd& x, const Eigen::MatrixXd& basis, Eigen::Index count) {
  if (count == 0) return;
  const auto q = basis.leftCols(count);
  for (int pass = 0; pass < 2; ++pass) x -= q * (q.transpose() * x);
}

// Random unit vector orthogonal to the first `count` columns of `basis`.
Eigen::VectorXd random_orthogonal(Rng& rng, const Eigen::MatrixXd& basis, Eigen::Index count) {
  Eigen::VectorXd x(basis.rows());
  for (int attempt = 0; attempt < 8; ++attempt) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
    orthogonalize(x, basis, count);
    const double norm = x.norm();
    if (norm > 1e-8) return x / norm;
  }
  throw NumericalError("could not extend orthonormal Lanczos basis");
}

Eigen::MatrixXd bidiagonal(const std::vector<double>& alpha, const std::vector<double>& beta,
                           Eigen::Index steps) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(steps, steps);
  for (Eigen::Index j = 0; j < steps; ++j) {
    b(j, j) = alpha[static_cast<std::size_t>(j)];
    if (j + 1 < steps) b(j, j + 1) = beta[static_cast<std::size_t>(j)];
  }
  return b;
}

template <typename Matrix>
SvdResult lanczos_svd(const Matrix& matrix, int k, const SvdOptions& options) {
  const Eigen::Index m0 = matrix.rows();
  const Eigen::Index n0 = matrix.cols();
  if (k < 1 || k > std::min(m0, n0)) {
    throw ParameterError(fmt::format("truncated_svd: k = {} outside [1, {}]", k, std::min(m0, n0)));
  }
  const Operator<Matrix> op{matrix, n0 > m0};
  const Eigen::Index m = op.rows();
  const Eigen::Index n = op.cols();  // n <= m
  const Eigen::Index max_steps = n;

  Rng rng(options.seed);
  Eigen::MatrixXd u_basis(m, max_steps);
  Eigen::MatrixXd v_basis(n, max_steps + 1);
  std::vector<double> alpha;
  std::vector<double> beta;

  {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
    v_basis.col(0) = v / v.norm();
  }

  // Scale estimate for breakdown detection, refined as the recurrence proceeds.
  double scale = 0.0;
  Eigen::VectorXd previous_values;
  double residual = 0.0;
  bool converged = false;
  Eigen::Index steps = 0;
  Eigen::Index next_check = k;
  // Step at which the recurrence last (nearly) hit an invariant subspace. A fresh
  // block must grow past k Ritz values before convergence is trusted, otherwise a
  // repeated singular value could be missed.
  Eigen::Index last_restart = 0;
  const auto weak = [&](double x) { return x <= 1e-6 * std::max(scale, 1e-300); };

  while (steps < max_steps) {
    const Eigen::Index j = steps;
    Eigen::VectorXd u = op.apply(v_basis.col(j));
    if (j > 0) u -= beta[static_cast<std::size_t>(j - 1)] * u_basis.col(j - 1);
    orthogonalize(u, u_basis, j);
    double a = u.norm();
    scale = std::max(scale, a);
    if (j > 0 && weak(a)) last_restart = j;
    if (a <= 1e-14 * std::max(scale, 1.0)) {
      a = 0.0;
      u = random_orthogonal(rng, u_basis, j);
    } else {
      u /= a;
    }
    u_basis.col(j) = u;
    alpha.push_back(a);
    steps = j + 1;

    Eigen::VectorXd v = op.apply_transpose(u_basis.col(j)) - a * v_basis.col(j);
    orthogonalize(v, v_basis, j + 1);
    double b = v.norm();
    scale = std::max(scale, b);
    if (steps == max_steps) {
      beta.push_back(0.0);
      break;
    }
    if (weak(b)) last_restart = steps;
    if (b <= 1e-14 * std::max(scale, 1.0)) {
      b = 0.0;
      v = random_orthogonal(rng, v_basis, j + 1);
    } else {
      v /= b;
    }
    v_basis.col(j + 1) = v;
    beta.push_back(b);

    if (steps >= next_check) {
      Eigen::BDCSVD<Eigen::MatrixXd> small(bidiagonal(alpha, beta, steps), Eigen::ComputeFullU);
      const Eigen::VectorXd values = small.singularValues().head(k);
      const double top = std::max(values[0], 1e-300);
      residual = 0.0;
      for (int i = 0; i < k; ++i) {
        residual = std::max(residual, std::abs(b * small.matrixU()(steps - 1, i)) / top);
      }
      bool stable = previous_values.size() == k;
      if (stable) {
        for (int i = 0; i < k; ++i) {
          if (std::abs(values[i] - previous_values[i]) > options.tolerance * top) stable = false;
        }
      }
      previous_values = values;
      const bool settled = last_restart == 0 || steps - last_restart >= k + 10;
      if (stable && settled && residual <= options.tolerance) {
        converged = true;
        break;
      }
      next_check = steps + std::max<Eigen::Index>(1, steps / 10);
    }
    if (steps >= options.max_iterations) throw ConvergenceError(static_cast<int>(steps), residual);
  }
  if (!converged) residual = 0.0;  // the basis spans the whole space: exact

  Eigen::JacobiSVD<Eigen::MatrixXd> small(bidiagonal(alpha, beta, steps),
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
  SvdResult result;
  result.values = small.singularValues().head(k);
  Eigen::MatrixXd left = u_basis.leftCols(steps) * small.matrixU().leftCols(k);
  Eigen::MatrixXd right = v_basis.leftCols(steps) * small.matrixV().leftCols(k);
  if (op.transposed) std::swap(left, right);
  result.left = std::move(left);
  result.right = std::move(right);
  result.iterations = static_cast<int>(steps);
  result.residual = residual;
  return result;
}

}  // namespace

SvdResult truncated_svd(const Eigen::SparseMatrix<double>& a, int k, const SvdOptions& options) {
  return lanczos_svd(a, k, options);
}

SvdResult truncated_svd(const Eigen::MatrixXd& a, int k, const SvdOptions& options) {
  return lanczos_svd(a, k, options);
}

Eigen::MatrixXd reconstruct(const SvdResult& svd) {
  return svd.left * svd.values.asDiagonal() * svd.right.transpose();
}

}  // namespace tagemb
