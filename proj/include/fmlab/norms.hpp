#pragma once

// Operator norm of small dense complex blocks: exact SVD up to the
// crossover, power iteration on B^* B beyond it.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <complex>

namespace fmlab {

inline double block_op_norm(const Eigen::MatrixXcd& block,
                            int svd_threshold = 64) {
  const int r = static_cast<int>(block.rows());
  const int c = static_cast<int>(block.cols());
  if (r == 0 || c == 0) return 0.0;
  if (std::min(r, c) <= svd_threshold)
    return Eigen::JacobiSVD<Eigen::MatrixXcd>(block).singularValues()(0);
  Eigen::VectorXcd v = Eigen::VectorXcd::Ones(c).normalized();
  double sigma = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXcd w = block.adjoint() * (block * v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    w /= nw;
    const double next = std::sqrt(nw);
    if (std::abs(next - sigma) <= 1e-8 * std::max(next, 1e-300)) return next;
    sigma = next;
    v = w;
  }
  return sigma;
}

}  // namespace fmlab
