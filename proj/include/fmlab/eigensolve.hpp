#pragma once

// Lowest eigenpairs of real symmetric sparse operators: dense solve for
// small matrices, shift-invert Lanczos with full reorthogonalization above
// the threshold. Deterministic start vectors.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <vector>

#include "fmlab/core.hpp"
#include "fmlab/lattice.hpp"

namespace fmlab {

struct EigenSolveResult {
  std::vector<double> values;          // ascending
  Eigen::MatrixXd vectors;             // columns, unit l2 norm
  std::vector<double> residuals;       // ||Hv - lambda v|| per pair
  double norm_estimate = 0.0;          // Gershgorin bound on ||H||
};

namespace detail {

inline double gershgorin_max(const Eigen::SparseMatrix<double>& m) {
  double best = 0.0;
  for (int k = 0; k < m.outerSize(); ++k) {
    double diag = 0.0, off = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
      if (it.row() == it.col())
        diag = it.value();
      else
        off += std::abs(it.value());
    }
    best = std::max(best, std::abs(diag) + off);
  }
  return best;
}

inline double gershgorin_min(const Eigen::SparseMatrix<double>& m) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < m.outerSize(); ++k) {
    double diag = 0.0, off = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
      if (it.row() == it.col())
        diag = it.value();
      else
        off += std::abs(it.value());
    }
    best = std::min(best, diag - off);
  }
  return best;
}

}  // namespace detail

inline EigenSolveResult lowest_eigenpairs(const SparseOperator& op, int k,
                                          int dense_threshold = 600) {
  if (k < 1 || k > op.n)
    throw ValidationError("lowest_eigenpairs: k must lie in [1, n]");
  EigenSolveResult res;
  res.norm_estimate = detail::gershgorin_max(op.matrix);

  if (op.n <= dense_threshold) {
    Eigen::MatrixXd dense(op.matrix);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
    if (solver.info() != Eigen::Success)
      throw NumericError("lowest_eigenpairs: dense solver failed");
    res.values.assign(solver.eigenvalues().data(),
                      solver.eigenvalues().data() + k);
    res.vectors = solver.eigenvectors().leftCols(k);
  } else {
    // shift-invert Lanczos about a point strictly below the spectrum
    const double lo = detail::gershgorin_min(op.matrix);
    const double span = std::max(res.norm_estimate - lo, 1.0);
    const double shift = lo - 0.01 * span;
    Eigen::SparseMatrix<double> shifted = op.matrix;
    for (int i = 0; i < op.n; ++i) shifted.coeffRef(i, i) -= shift;
    shifted.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success)
      throw NumericError("lowest_eigenpairs: factorization failed");

    const int m = std::min(op.n, std::max(4 * k + 20, 40));
    Eigen::MatrixXd basis(op.n, m);
    Eigen::VectorXd alpha(m), beta(m);
    RngStream stream = master_stream(0x5eed).child("lanczos");
    Eigen::VectorXd v(op.n);
    for (int i = 0; i < op.n; ++i)
      v[i] = stream.uniform(static_cast<std::uint64_t>(i)) - 0.5;
    v.normalize();
    Eigen::VectorXd prev = Eigen::VectorXd::Zero(op.n);
    double beta_prev = 0.0;
    int steps = 0;
    for (int j = 0; j < m; ++j) {
      basis.col(j) = v;
      Eigen::VectorXd w = lu.solve(v);
      if (lu.info() != Eigen::Success)
        throw NumericError("lowest_eigenpairs: shift-invert solve failed");
      w -= beta_prev * prev;
      alpha[j] = v.dot(w);
      w -= alpha[j] * v;
      // full reorthogonalization, twice
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= j; ++i) w -= basis.col(i).dot(w) * basis.col(i);
      beta_prev = w.norm();
      steps = j + 1;
      if (beta_prev < 1e-13) break;
      beta[j] = beta_prev;
      prev = v;
      v = w / beta_prev;
    }
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(steps, steps);
    for (int j = 0; j < steps; ++j) {
      tri(j, j) = alpha[j];
      if (j + 1 < steps) tri(j, j + 1) = tri(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tsolver(tri);
    // largest eigenvalues of (H - shift)^{-1} give the lowest of H
    if (steps < k)
      throw NumericError("lowest_eigenpairs: Lanczos space too small");
    res.values.resize(k);
    res.vectors.resize(op.n, k);
    for (int i = 0; i < k; ++i) {
      const int idx = steps - 1 - i;
      const double theta = tsolver.eigenvalues()[idx];
      if (std::abs(theta) < 1e-300)
        throw NumericError("lowest_eigenpairs: spurious Ritz value");
      res.values[i] = shift + 1.0 / theta;
      Eigen::VectorXd y =
          basis.leftCols(steps) * tsolver.eigenvectors().col(idx);
      y.normalize();
      res.vectors.col(i) = y;
    }
    // ascending order
    for (int i = 0; i + 1 < k; ++i)
      for (int j = 0; j + 1 < k - i; ++j)
        if (res.values[j] > res.values[j + 1]) {
          std::swap(res.values[j], res.values[j + 1]);
          res.vectors.col(j).swap(res.vectors.col(j + 1));
        }
  }

  res.residuals.resize(k);
  const double tol = 1e-8 * std::max(res.norm_estimate, 1.0);
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd r =
        op.matrix * res.vectors.col(i) - res.values[i] * res.vectors.col(i);
    res.residuals[static_cast<std::size_t>(i)] = r.norm();
    if (r.norm() > tol)
      throw NumericError("lowest_eigenpairs: residual " +
                         std::to_string(r.norm()) + " above tolerance");
  }
  return res;
}

// Full eigendecomposition (dense); guarded by an explicit size cap because
// the dynamical experiments call this per realization.
inline void full_eigensystem(const SparseOperator& op, Eigen::VectorXd& values,
                             Eigen::MatrixXd& vectors, int max_dense = 3000) {
  if (op.n > max_dense)
    throw ValidationError("full_eigensystem: matrix too large for dense path");
  Eigen::MatrixXd dense(op.matrix);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
  if (solver.info() != Eigen::Success)
    throw NumericError("full_eigensystem: solver failed");
  values = solver.eigenvalues();
  vectors = solver.eigenvectors();
}

}  // namespace fmlab
