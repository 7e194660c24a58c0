#pragma once

// Monte Carlo fractional moments E || chi_x R chi_y ||^s with decay
// profiling, the two-coupling quadrature average of the dissipative
// Hilbert-Schmidt integrand, and the weak-L1 tail of its exceedance sets.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "fmlab/core.hpp"
#include "fmlab/disorder.hpp"
#include "fmlab/fit.hpp"
#include "fmlab/lattice.hpp"
#include "fmlab/quadrature.hpp"
#include "fmlab/resolvent.hpp"

namespace fmlab {

struct MomentEstimate {
  double s = 0.5;
  double energy = 0.0;
  double epsilon = 1e-6;
  int count = 0;
  double mean = 0.0;
  double stderr_mean = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void check_fraction(double s, double hi) {
  if (!(s > 0.0) || !(s < hi))
    throw ValidationError("fractional power s must lie in (0," +
                          std::to_string(hi) + ")");
}

inline MomentEstimate reduce_moment(std::span<const double> values, double s,
                                    double energy, double epsilon,
                                    std::uint64_t seed) {
  MomentEstimate est;
  est.s = s;
  est.energy = energy;
  est.epsilon = epsilon;
  est.count = static_cast<int>(values.size());
  est.seed = seed;
  est.mean = pairwise_sum(values) / est.count;
  if (est.count > 1) {
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double d = values[i] - est.mean;
      sq[i] = d * d;
    }
    est.stderr_mean = std::sqrt(pairwise_sum(sq) /
                                (static_cast<double>(est.count) *
                                 (est.count - 1.0)));
  }
  return est;
}

}  // namespace detail

// E || chi_x R(omega) chi_y ||^s over N independent realizations.
inline MomentEstimate fractional_moment(const AlloyModel& model,
                                        const Domain& domain, double energy,
                                        double epsilon, double s,
                                        const RVec& x, const RVec& y, int n,
                                        std::uint64_t seed, int workers = 1) {
  detail::check_fraction(s, 1.0);
  if (n < 1) throw ValidationError("fractional_moment: N must be >= 1");
  const IndicatorBlock bx = indicator(domain, x);
  const IndicatorBlock by = indicator(domain, y);
  std::vector<double> values(static_cast<std::size_t>(n), 0.0);
  parallel_for_indexed(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    try {
      SparseOperator H = model.realize(domain, seed, i);
      if (bx.empty() || by.empty()) {
        values[i] = 0.0;
        return;
      }
      ShiftedFactorization fact(H, {energy, epsilon});
      values[i] = std::pow(resolvent_block(fact, bx.indices, by.indices).op_norm, s);
    } catch (const NumericError& err) {
      throw NumericError("fractional_moment: realization " + std::to_string(i) +
                         " failed: " + err.what());
    }
  });
  return detail::reduce_moment(values, s, energy, epsilon, seed);
}

// Decay profile of the moments over a separation sweep; one factorization
// per realization serves every separation.
struct MomentProfile {
  std::vector<double> separations;
  std::vector<MomentEstimate> estimates;
  DecayModel fit;
  bool fit_degenerate = false;   // all estimates at the noise floor
  bool cap_exceeded = false;     // only when a boundedness cap was supplied
  double cap = 0.0;
};

inline MomentProfile moment_decay_profile(
    const AlloyModel& model, const Domain& domain, double energy,
    double epsilon, double s, const RVec& x0,
    std::span<const double> separations, int n, std::uint64_t seed,
    int workers = 1, std::optional<double> boundedness_cap = std::nullopt) {
  detail::check_fraction(s, 1.0 / 3.0 + 1e-12);
  if (separations.size() < 4)
    throw ValidationError("moment_decay_profile: need >= 4 separations");

  const IndicatorBlock bx = indicator(domain, x0);
  std::vector<IndicatorBlock> bys;
  for (double r : separations) {
    RVec y = x0;
    y[0] += r;
    bys.push_back(indicator(domain, y));
  }
  const std::size_t S = separations.size();
  std::vector<double> slots(static_cast<std::size_t>(n) * S, 0.0);
  parallel_for_indexed(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    try {
      SparseOperator H = model.realize(domain, seed, i);
      ShiftedFactorization fact(H, {energy, epsilon});
      if (bx.empty()) return;
      double residual = 0.0;
      Eigen::MatrixXcd cols = fact.columns(bx.indices, &residual);
      // complex symmetry: chi_x R chi_y is the transpose of chi_y R chi_x,
      // so columns at x serve every separation
      for (std::size_t sI = 0; sI < S; ++sI) {
        if (bys[sI].empty()) continue;
        const BlockNormResult b = block_norms(cols, bys[sI].indices, residual);
        slots[i * S + sI] = std::pow(b.op_norm, s);
      }
    } catch (const NumericError& err) {
      throw NumericError("moment_decay_profile: realization " +
                         std::to_string(i) + " failed: " + err.what());
    }
  });

  MomentProfile prof;
  prof.separations.assign(separations.begin(), separations.end());
  std::vector<double> means;
  for (std::size_t sI = 0; sI < S; ++sI) {
    std::vector<double> col(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      col[static_cast<std::size_t>(i)] = slots[static_cast<std::size_t>(i) * S + sI];
    prof.estimates.push_back(
        detail::reduce_moment(col, s, energy, epsilon, seed));
    means.push_back(prof.estimates.back().mean);
  }
  if (boundedness_cap) {
    prof.cap = *boundedness_cap;
    for (double m : means)
      if (m > *boundedness_cap) prof.cap_exceeded = true;
  }
  const double top = *std::max_element(means.begin(), means.end());
  if (!(top > 0) || top < 1e-250) {
    prof.fit_degenerate = true;
    return prof;
  }
  try {
    prof.fit = fit_exponential_decay(prof.separations, means, top * 1e-14, 4);
  } catch (const NumericError&) {
    prof.fit_degenerate = true;
  }
  return prof;
}

// ---------------------------------------------------------------------------
// Two-coupling average of || M1 U1^{1/2} (A - v1 U1 - v2 U2)^{-1} U2^{1/2} M2 ||_HS^s
// against the coupling densities, by tensor Gauss-Legendre quadrature. The
// reference shape on the right-hand side is ||M1||_HS^s ||M2||_HS^s.

struct DissipativeInstance {
  Eigen::MatrixXcd A;     // maximally dissipative, e.g. -(S - E - i eps)
  Eigen::VectorXd U1, U2; // nonnegative diagonals
  Eigen::MatrixXcd M1, M2;

  void validate() const {
    const auto n = A.rows();
    if (A.cols() != n || U1.size() != n || U2.size() != n ||
        M1.cols() != n || M2.rows() != n)
      throw ValidationError("DissipativeInstance: inconsistent dimensions");
    for (Eigen::Index i = 0; i < n; ++i)
      if (U1[i] < 0 || U2[i] < 0)
        throw ValidationError("DissipativeInstance: U must be nonnegative");
  }

  double integrand_hs(double v1, double v2) const {
    const auto n = A.rows();
    Eigen::MatrixXcd shifted = A;
    for (Eigen::Index i = 0; i < n; ++i)
      shifted(i, i) -= Complex(v1 * U1[i] + v2 * U2[i], 0.0);
    Eigen::VectorXd su1 = U1.cwiseSqrt(), su2 = U2.cwiseSqrt();
    Eigen::MatrixXcd rhs = su2.asDiagonal() * M2;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(shifted);
    Eigen::MatrixXcd solved = lu.solve(rhs);
    Eigen::MatrixXcd block = M1 * (su1.asDiagonal() * solved);
    return block.norm();
  }
};

struct WorkhorseResult {
  double lhs = 0.0;            // quadrature at the requested order
  double lhs_coarse = 0.0;     // at half the order
  double est_error = 0.0;      // |lhs - lhs_coarse|
  double hs_product_s = 0.0;   // ||M1||^s ||M2||^s
  double ratio = 0.0;          // lhs / hs_product_s (empirical c(s))
  int order = 0;
  bool converged = true;
};

inline WorkhorseResult workhorse_average(const DissipativeInstance& inst,
                                         double s, const CouplingLaw& law1,
                                         const CouplingLaw& law2,
                                         int order = 128,
                                         double rel_tol = 0.05) {
  detail::check_fraction(s, 1.0);
  inst.validate();
  if (!law1.absolutely_continuous() || !law2.absolutely_continuous())
    throw ValidationError("workhorse_average: laws must be absolutely continuous");

  auto evaluate = [&](int q) {
    const QuadratureRule rule = gauss_legendre(q);
    std::vector<double> n1(static_cast<std::size_t>(q)), w1(static_cast<std::size_t>(q));
    std::vector<double> n2(static_cast<std::size_t>(q)), w2(static_cast<std::size_t>(q));
    for (int i = 0; i < q; ++i) {
      n1[static_cast<std::size_t>(i)] = 0.5 * law1.eta_max() * (rule.nodes[static_cast<std::size_t>(i)] + 1.0);
      w1[static_cast<std::size_t>(i)] = 0.5 * law1.eta_max() * rule.weights[static_cast<std::size_t>(i)];
      n2[static_cast<std::size_t>(i)] = 0.5 * law2.eta_max() * (rule.nodes[static_cast<std::size_t>(i)] + 1.0);
      w2[static_cast<std::size_t>(i)] = 0.5 * law2.eta_max() * rule.weights[static_cast<std::size_t>(i)];
    }
    std::vector<double> rows(static_cast<std::size_t>(q), 0.0);
    for (int i = 0; i < q; ++i) {
      std::vector<double> terms(static_cast<std::size_t>(q));
      for (int j = 0; j < q; ++j) {
        const double v1 = n1[static_cast<std::size_t>(i)], v2 = n2[static_cast<std::size_t>(j)];
        const double f = std::pow(inst.integrand_hs(v1, v2), s);
        terms[static_cast<std::size_t>(j)] = w1[static_cast<std::size_t>(i)] *
                                             law1.density(v1) *
                                             w2[static_cast<std::size_t>(j)] *
                                             law2.density(v2) * f;
      }
      rows[static_cast<std::size_t>(i)] = pairwise_sum(terms);
    }
    return pairwise_sum(rows);
  };

  WorkhorseResult res;
  res.order = order;
  res.lhs = evaluate(order);
  res.lhs_coarse = evaluate(order / 2);
  res.est_error = std::abs(res.lhs - res.lhs_coarse);
  res.hs_product_s =
      std::pow(inst.M1.norm(), s) * std::pow(inst.M2.norm(), s);
  res.ratio = (res.hs_product_s > 0) ? res.lhs / res.hs_product_s : 0.0;
  if (res.lhs > 0 && res.est_error > rel_tol * res.lhs) res.converged = false;
  return res;
}

// ---------------------------------------------------------------------------
// Empirical Lebesgue measure of { (v1,v2) in [0,1]^2 : ||...||_HS > t } over
// a threshold grid, with the fitted log-log slope and the weak-L1 constant.

struct TailReport {
  std::vector<double> thresholds;
  std::vector<double> measures;     // non-increasing in t
  std::vector<int> exceedances;
  double slope = 0.0;               // log measure vs log t over the fit range
  bool slope_valid = false;
  double fitted_constant = 0.0;     // max_t t * measure / (||M1|| ||M2||)
  bool insufficient_tail = false;   // too few exceedances at the largest t
  int samples = 0;
};

inline TailReport weak_l1_tail(const DissipativeInstance& inst,
                               std::span<const double> thresholds, int samples,
                               std::uint64_t seed) {
  inst.validate();
  if (thresholds.size() < 5)
    throw ValidationError("weak_l1_tail: need at least 5 thresholds");
  std::vector<double> ts(thresholds.begin(), thresholds.end());
  std::sort(ts.begin(), ts.end());
  if (!(ts.front() > 0))
    throw ValidationError("weak_l1_tail: thresholds must be positive");
  if (ts.back() / ts.front() < 100.0 - 1e-9)
    throw ValidationError("weak_l1_tail: thresholds must span >= 2 decades");

  RngStream stream = master_stream(seed).child("weak-l1");
  std::vector<int> counts(ts.size(), 0);
  for (int i = 0; i < samples; ++i) {
    const double v1 = stream.uniform(2 * static_cast<std::uint64_t>(i));
    const double v2 = stream.uniform(2 * static_cast<std::uint64_t>(i) + 1);
    const double g = inst.integrand_hs(v1, v2);
    for (std::size_t k = 0; k < ts.size(); ++k) {
      if (g > ts[k])
        ++counts[k];
      else
        break;  // thresholds ascend, exceedance sets nest
    }
  }

  TailReport rep;
  rep.samples = samples;
  rep.thresholds = ts;
  const double hs12 = inst.M1.norm() * inst.M2.norm();
  std::vector<double> fit_logt, fit_logm;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double m = static_cast<double>(counts[k]) / samples;
    rep.measures.push_back(m);
    rep.exceedances.push_back(counts[k]);
    if (m > 10.0 / samples && m < 0.5) {
      fit_logt.push_back(std::log(ts[k]));
      fit_logm.push_back(std::log(m));
    }
    if (m > 0 && hs12 > 0)
      rep.fitted_constant = std::max(rep.fitted_constant, ts[k] * m / hs12);
  }
  if (rep.exceedances.back() < 10) rep.insufficient_tail = true;
  if (fit_logt.size() >= 2) {
    rep.slope = fit_line(fit_logt, fit_logm).slope;
    rep.slope_valid = true;
  }
  return rep;
}

}  // namespace fmlab
