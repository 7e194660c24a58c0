#pragma once

// Test-side oracles, independent of the library's solve paths: dense
// resolvent evaluation, the 1D lattice Green's-function rate, adaptive
// quadrature references and the Cramer rate of a coupling law.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>

#include "fmlab/disorder.hpp"
#include "fmlab/lattice.hpp"
#include "fmlab/quadrature.hpp"

namespace oracles {

// Dense inverse of (H - z); everything the sparse path computes can be read
// off this matrix directly.
inline Eigen::MatrixXcd dense_resolvent(const fmlab::SparseOperator& op,
                                        double energy, double epsilon) {
  Eigen::MatrixXcd dense = Eigen::MatrixXd(op.matrix).cast<std::complex<double>>();
  for (int i = 0; i < op.n; ++i)
    dense(i, i) -= std::complex<double>(energy, epsilon);
  return dense.inverse();
}

inline Eigen::MatrixXcd dense_block(const Eigen::MatrixXcd& R,
                                    const std::vector<int>& rows,
                                    const std::vector<int>& cols) {
  Eigen::MatrixXcd B(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      B(static_cast<int>(i), static_cast<int>(j)) =
          R(rows[i], cols[j]);
  return B;
}

// Free 1D lattice at spacing h: the Green's function below the band decays
// at rate acosh((2 - E h^2)/2) / h per unit physical distance.
inline double lattice_decay_rate(double energy, double h) {
  const double arg = (2.0 - energy * h * h) / 2.0;
  return std::acosh(arg) / h;
}

// Cramer rate for the lower deviation P(mean_n <= theta): numeric Legendre
// transform I(theta) = sup_l [ -l theta - log E e^{-l eta} ] by golden
// section, with the moment generating function from adaptive quadrature.
inline double cramer_rate(const fmlab::CouplingLaw& law, double theta) {
  auto objective = [&](double l) {
    const double mgf = fmlab::adaptive_simpson(
        [&](double eta) { return law.density(eta) * std::exp(-l * eta); }, 0.0,
        law.eta_max(), 1e-12);
    return -l * theta - std::log(mgf);
  };
  double lo = 0.0, hi = 1.0;
  while (objective(hi * 2.0) > objective(hi) && hi < 1e6) hi *= 2.0;
  hi *= 2.0;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  for (int it = 0; it < 200; ++it) {
    if (objective(c) > objective(d))
      b = d;
    else
      a = c;
    c = b - gr * (b - a);
    d = a + gr * (b - a);
    if (b - a < 1e-10) break;
  }
  return objective(0.5 * (a + b));
}

}  // namespace oracles
