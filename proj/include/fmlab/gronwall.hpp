#pragma once

// The weighted-l-infinity machinery for the decay recursion: the kernel
// operator with entries L^{-2d-kappa} e^{-c(|x-x'|+|y-y'|)/L} on a truncated
// index window, its norm in the plain and weighted spaces (weight
// e^{(c/2L)|x-y|}), the Neumann-series solver for tau <= A tau + b, and the
// exponential-envelope extraction from solved sequences.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "fmlab/core.hpp"
#include "fmlab/fit.hpp"

namespace fmlab {

struct WeightedKernel {
  int dimension = 1;      // d
  double scale = 8.0;     // L
  double rate = 1.0;      // c
  double offset = 0.5;    // kappa
  std::int64_t truncation = 40;  // window Z^d cap [-T, T]^d per factor

  void validate() const {
    if (dimension < 1 || dimension > 3)
      throw ValidationError("WeightedKernel: dimension must be 1..3");
    if (!(scale > 0) || !(rate > 0))
      throw ValidationError("WeightedKernel: scale and rate must be positive");
    if (truncation < 4)
      throw ValidationError("WeightedKernel: truncation too small");
  }
  double decay_per_site() const { return rate / scale; }         // mu
  double weight_exponent() const { return 0.5 * decay_per_site(); }
  double prefactor() const {
    return std::pow(scale, -(2.0 * dimension + offset));
  }
};

namespace detail {

// window Z^d cap [-T,T]^d in lexicographic order
inline std::vector<IVec> kernel_window(int d, std::int64_t T) {
  std::vector<IVec> sites;
  for (std::int64_t a = -T; a <= T; ++a) {
    if (d == 1) {
      sites.push_back({a, 0, 0});
      continue;
    }
    for (std::int64_t b = -T; b <= T; ++b) {
      if (d == 2) {
        sites.push_back({a, b, 0});
        continue;
      }
      for (std::int64_t c = -T; c <= T; ++c) sites.push_back({a, b, c});
    }
  }
  return sites;
}

// sum over Z^d of e^{-m |k|_max}, via the shell counts
// (#{|k|=r} = (2r+1)^d - (2r-1)^d)
inline double geometric_maxnorm_sum(int d, double m) {
  const double q = std::exp(-m);
  const double s0 = q / (1.0 - q);                         // sum r>=1 q^r
  const double s1 = q / ((1.0 - q) * (1.0 - q));           // sum r q^r
  const double s2 = q * (1.0 + q) / std::pow(1.0 - q, 3);  // sum r^2 q^r
  switch (d) {
    case 1:
      return 1.0 + 2.0 * s0;
    case 2:
      return 1.0 + 8.0 * s1;
    case 3:
      return 1.0 + 24.0 * s2 + 2.0 * s0;
    default:
      throw ValidationError("geometric_maxnorm_sum: dimension must be 1..3");
  }
}

inline Eigen::MatrixXd pair_exponential(const std::vector<IVec>& w, int d,
                                        double m) {
  const int n = static_cast<int>(w.size());
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i) {
    M(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double v = std::exp(
          -m * static_cast<double>(max_norm_int(w[static_cast<std::size_t>(i)],
                                                w[static_cast<std::size_t>(j)], d)));
      M(i, j) = v;
      M(j, i) = v;
    }
  }
  return M;
}

}  // namespace detail

struct KernelNormReport {
  double linf_window = 0.0;  // max row sum of the truncated kernel
  double linf_tail = 0.0;    // analytic tail of the central row
  double linf_total = 0.0;
  double x_window = 0.0;     // same for the conjugated kernel
  double x_tail = 0.0;
  double x_total = 0.0;
  double tail_ratio = 0.0;   // x_tail / x_window (worst of the two spaces)
};

// Norms of the kernel in l-infinity and in the weighted space X; the
// conjugated kernel for X is e^{mu|x-y|/2} K e^{-mu|x'-y'|/2}. Tails beyond
// the window are bounded by the geometric series at the halved rate (the
// triangle inequality absorbs the weight) and added to the window value.
inline KernelNormReport kernel_norm(const WeightedKernel& kernel,
                                    double tail_tolerance = 1e-10,
                                    bool enforce_tail = true) {
  kernel.validate();
  const int d = kernel.dimension;
  const double m = kernel.decay_per_site();
  const double a = kernel.weight_exponent();
  const double p = kernel.prefactor();
  const auto window = detail::kernel_window(d, kernel.truncation);
  const int W = static_cast<int>(window.size());

  // plain l-infinity: row sums factorize across the two Z^d factors
  Eigen::MatrixXd M = detail::pair_exponential(window, d, m);
  Eigen::VectorXd row_m = M.rowwise().sum();
  const double s_full = detail::geometric_maxnorm_sum(d, m);
  double linf_win = 0.0;
  double s_center = 0.0;
  for (int i = 0; i < W; ++i) {
    for (int j = 0; j < W; ++j)
      linf_win = std::max(linf_win, row_m[i] * row_m[j]);
    bool center = true;
    for (int k = 0; k < d; ++k)
      if (window[static_cast<std::size_t>(i)][k] != 0) center = false;
    if (center) s_center = row_m[i];
  }
  KernelNormReport rep;
  rep.linf_window = p * linf_win;
  rep.linf_tail = p * std::max(0.0, s_full * s_full - s_center * s_center);
  rep.linf_total = rep.linf_window + rep.linf_tail;

  // conjugated kernel: row sums of e^{a|x-y|} sum_{x',y'} K N with
  // N = e^{-a|x'-y'|}; the double sum is the matrix product M N M
  Eigen::MatrixXd N = detail::pair_exponential(window, d, a);
  Eigen::MatrixXd RS = M * N * M;
  double x_win = 0.0;
  for (int i = 0; i < W; ++i)
    for (int j = 0; j < W; ++j) {
      const double wgt = std::exp(
          a * static_cast<double>(max_norm_int(window[static_cast<std::size_t>(i)],
                                               window[static_cast<std::size_t>(j)], d)));
      x_win = std::max(x_win, wgt * RS(i, j));
    }
  // tail of the conjugated central row at the halved rate
  Eigen::MatrixXd Mh = detail::pair_exponential(window, d, a);
  const double sh_full = detail::geometric_maxnorm_sum(d, a);
  double sh_center = 0.0;
  {
    Eigen::VectorXd row_h = Mh.rowwise().sum();
    for (int i = 0; i < W; ++i) {
      bool center = true;
      for (int k = 0; k < d; ++k)
        if (window[static_cast<std::size_t>(i)][k] != 0) center = false;
      if (center) sh_center = row_h[i];
    }
  }
  rep.x_window = p * x_win;
  rep.x_tail = p * std::max(0.0, sh_full * sh_full - sh_center * sh_center);
  rep.x_total = rep.x_window + rep.x_tail;

  rep.tail_ratio = std::max(rep.x_tail / std::max(rep.x_window, 1e-300),
                            rep.linf_tail / std::max(rep.linf_window, 1e-300));
  if (enforce_tail && rep.tail_ratio > tail_tolerance)
    throw ValidationError(
        "kernel_norm: truncation " + std::to_string(kernel.truncation) +
        " leaves a relative tail " + std::to_string(rep.tail_ratio) +
        " above the tolerance " + std::to_string(tail_tolerance) +
        "; enlarge the window");
  return rep;
}

// A sequence tau_{x,y} on the window, with its weighted-supremum norm.
struct DecaySequence {
  int dimension = 1;
  std::int64_t truncation = 40;
  double weight_exponent = 0.0;  // mu/2
  Eigen::MatrixXd values;        // indexed by the window site lists

  template <class F>
  static DecaySequence from_function(const WeightedKernel& kernel, F&& f) {
    DecaySequence seq;
    seq.dimension = kernel.dimension;
    seq.truncation = kernel.truncation;
    seq.weight_exponent = kernel.weight_exponent();
    const auto window = detail::kernel_window(kernel.dimension, kernel.truncation);
    const int W = static_cast<int>(window.size());
    seq.values.resize(W, W);
    for (int i = 0; i < W; ++i)
      for (int j = 0; j < W; ++j)
        seq.values(i, j) = f(window[static_cast<std::size_t>(i)],
                             window[static_cast<std::size_t>(j)]);
    return seq;
  }

  double x_norm() const {
    const auto window = detail::kernel_window(dimension, truncation);
    const int W = static_cast<int>(window.size());
    double best = 0.0;
    for (int i = 0; i < W; ++i)
      for (int j = 0; j < W; ++j) {
        const double wgt = std::exp(
            weight_exponent *
            static_cast<double>(max_norm_int(window[static_cast<std::size_t>(i)],
                                             window[static_cast<std::size_t>(j)],
                                             dimension)));
        best = std::max(best, wgt * std::abs(values(i, j)));
      }
    return best;
  }
};

struct RecursionSolution {
  DecaySequence tau;
  int iterations = 0;
  double fixed_point_residual = 0.0;  // ||tau - A tau - b||_X
  double contraction_norm = 0.0;      // the certified X norm of A
};

// Neumann series sum A^n b, accumulated until the increment's X norm drops
// below `tol`. Requires the contraction certificate first.
inline RecursionSolution solve_recursion(const WeightedKernel& kernel,
                                         const DecaySequence& b,
                                         double tol = 1e-12,
                                         int max_iterations = 10000,
                                         double tail_tolerance = 1e-10) {
  kernel.validate();
  const KernelNormReport norms = kernel_norm(kernel, tail_tolerance);
  if (!(norms.x_total < 1.0))
    throw ValidationError(
        "solve_recursion: kernel is not a contraction in X (norm " +
        std::to_string(norms.x_total) + " >= 1)");
  const auto window = detail::kernel_window(kernel.dimension, kernel.truncation);
  const int W = static_cast<int>(window.size());
  if (b.values.rows() != W || b.values.cols() != W ||
      b.dimension != kernel.dimension || b.truncation != kernel.truncation)
    throw ValidationError("solve_recursion: b does not match the kernel window");
  for (int i = 0; i < W; ++i)
    for (int j = 0; j < W; ++j)
      if (b.values(i, j) < 0)
        throw ValidationError("solve_recursion: b must be nonnegative");

  const double p = kernel.prefactor();
  Eigen::MatrixXd M =
      detail::pair_exponential(window, kernel.dimension, kernel.decay_per_site());
  auto apply = [&](const Eigen::MatrixXd& psi) -> Eigen::MatrixXd {
    return p * (M * psi * M);
  };

  RecursionSolution sol;
  sol.contraction_norm = norms.x_total;
  sol.tau = b;
  Eigen::MatrixXd term = b.values;
  DecaySequence probe = b;
  int it = 0;
  for (; it < max_iterations; ++it) {
    term = apply(term);
    sol.tau.values += term;
    probe.values = term;
    if (probe.x_norm() < tol) break;
  }
  if (it >= max_iterations)
    throw NumericError("solve_recursion: Neumann series did not reach tolerance");
  sol.iterations = it + 1;
  probe.values = sol.tau.values - apply(sol.tau.values) - b.values;
  sol.fixed_point_residual = probe.x_norm();
  return sol;
}

// Diagonal-profile envelope: sup of tau over pairs at each max-norm
// separation, fitted to an exponential.
inline DecayModel envelope_extract(const DecaySequence& tau) {
  const auto window = detail::kernel_window(tau.dimension, tau.truncation);
  const int W = static_cast<int>(window.size());
  if (2 * tau.truncation < 8)
    throw ValidationError("envelope_extract: window diameter below 8");
  std::map<std::int64_t, double> profile;
  for (int i = 0; i < W; ++i)
    for (int j = 0; j < W; ++j) {
      const std::int64_t r =
          max_norm_int(window[static_cast<std::size_t>(i)],
                       window[static_cast<std::size_t>(j)], tau.dimension);
      auto [itp, inserted] = profile.try_emplace(r, tau.values(i, j));
      if (!inserted) itp->second = std::max(itp->second, tau.values(i, j));
    }
  std::vector<double> rs, vs;
  for (const auto& [r, v] : profile) {
    rs.push_back(static_cast<double>(r));
    vs.push_back(v);
  }
  const double peak = *std::max_element(vs.begin(), vs.end());
  if (!(peak > 0))
    throw NumericError("envelope_extract: sequence vanishes identically");
  return fit_exponential_decay(rs, vs, peak * 1e-14, 4);
}

}  // namespace fmlab
