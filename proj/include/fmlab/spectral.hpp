#pragma once

// Eigenvalue experiments: box-probability sweeps near the spectral bottom,
// Neumann/Dirichlet bracketing on strips, the first-order perturbation
// identity, sample-mean deviation probes, eigenfunction decay fits and the
// time-evolution correlator with its eigenfunction-sum majorant.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "fmlab/core.hpp"
#include "fmlab/disorder.hpp"
#include "fmlab/eigensolve.hpp"
#include "fmlab/fit.hpp"
#include "fmlab/lattice.hpp"
#include "fmlab/norms.hpp"

namespace fmlab {

// ---------------------------------------------------------------------------
// Probability estimates with Wilson score intervals.

struct ProbabilityEstimate {
  std::string event;
  double L = 0.0;
  double window_lo = 0.0, window_hi = 0.0;
  int trials = 0;
  int successes = 0;
  double estimate = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // 95% Wilson score interval
};

inline void wilson_interval(int successes, int trials, double& lo, double& hi) {
  if (trials == 0) {
    lo = 0.0;
    hi = 1.0;
    return;
  }
  const double z = 1.959963984540054;  // 97.5% normal quantile
  const double n = trials;
  const double p = successes / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double margin =
      z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  lo = std::max(0.0, center - margin);
  hi = std::min(1.0, center + margin);
}

// ---------------------------------------------------------------------------
// Spectral bottom of the background at a reference scale, with a convergence
// check against a coarser scale. All probability windows are anchored here.

struct SpectralAnchor {
  double E0 = 0.0;          // at the reference scale
  double E0_coarse = 0.0;   // at half the reference scale
  double drift = 0.0;       // |E0 - E0_coarse|
  double scale = 0.0;
};

inline SpectralAnchor background_bottom(const AlloyModel& model, double scale,
                                        BoundaryCondition bc =
                                            BoundaryCondition::dirichlet()) {
  SpectralAnchor a;
  a.scale = scale;
  Domain big = build_domain(model.grid, Box{rvec(0.0), scale}, bc);
  Domain half = build_domain(model.grid, Box{rvec(0.0), scale / 2.0}, bc);
  std::vector<double> vb(static_cast<std::size_t>(big.size()));
  for (int i = 0; i < big.size(); ++i)
    vb[static_cast<std::size_t>(i)] =
        model.background.value(big.position(i), model.grid.dimension);
  std::vector<double> vh(static_cast<std::size_t>(half.size()));
  for (int i = 0; i < half.size(); ++i)
    vh[static_cast<std::size_t>(i)] =
        model.background.value(half.position(i), model.grid.dimension);
  a.E0 = lowest_eigenpairs(assemble_hamiltonian(big, vb), 1).values[0];
  a.E0_coarse = lowest_eigenpairs(assemble_hamiltonian(half, vh), 1).values[0];
  a.drift = std::abs(a.E0 - a.E0_coarse);
  return a;
}

// ---------------------------------------------------------------------------
// Probability that the box (or strip) spectrum meets [E0, E0 + L^{-m}].

struct IlsSettings {
  double m = 1.0;               // window exponent, in (0, 2)
  int trials = 500;
  std::uint64_t seed = 1;
  int workers = 1;
  std::optional<double> strip_width;  // set for strip geometry (first axis box)
};

inline ProbabilityEstimate ils_probability(const AlloyModel& model, double L,
                                           double E0, const IlsSettings& s) {
  if (!(s.m > 0.0) || !(s.m < 2.0))
    throw ValidationError("ils_probability: m must lie in (0, 2)");
  if (s.trials < 1) throw ValidationError("ils_probability: trials must be >= 1");

  Domain domain =
      s.strip_width
          ? build_domain(model.grid,
                         StripGeom{{0.0}, L, *s.strip_width}, model.bc)
          : build_domain(model.grid, Box{rvec(0.0), L}, model.bc);

  const double window = std::pow(L, -s.m);
  std::vector<int> hits(static_cast<std::size_t>(s.trials), 0);
  parallel_for_indexed(
      static_cast<std::size_t>(s.trials), s.workers, [&](std::size_t i) {
        SparseOperator H = model.realize(domain, s.seed, i);
        double e1 = 0.0;
        try {
          e1 = lowest_eigenpairs(H, 1).values[0];
        } catch (const NumericError& err) {
          throw NumericError("ils_probability: eigensolve failed at realization " +
                             std::to_string(i) + ": " + err.what());
        }
        hits[i] = (e1 <= E0 + window) ? 1 : 0;
      });

  ProbabilityEstimate p;
  p.event = "spectrum meets [E0, E0 + L^-m]";
  p.L = L;
  p.window_lo = E0;
  p.window_hi = E0 + window;
  p.trials = s.trials;
  for (int h : hits) p.successes += h;  // integer sum, order-free
  p.estimate = static_cast<double>(p.successes) / s.trials;
  wilson_interval(p.successes, p.trials, p.ci_lo, p.ci_hi);
  return p;
}

// ---------------------------------------------------------------------------
// Two-sided bracketing on a strip: the Neumann realization lies below the
// Dirichlet one, and above the minimum over a disjoint sub-strip partition
// (Neumann pieces).

struct BracketingReport {
  double e1_neumann_whole = 0.0;
  double e1_dirichlet_whole = 0.0;
  std::vector<double> e1_pieces;
  double min_piece = 0.0;
  double slack_upper = 0.0;  // e1_dirichlet - e1_neumann   (>= 0 expected)
  double slack_lower = 0.0;  // e1_neumann - min_piece      (>= 0 expected)
  bool ok(double tol = 1e-9) const {
    return slack_upper >= -tol && slack_lower >= -tol;
  }
};

// Splits the strip sites into slabs along axis 0 at the given physical cut
// positions. Pieces must be nonempty; they partition the sites by
// construction.
inline BracketingReport bracketing_check(const Domain& strip,
                                         std::span<const double> cuts,
                                         std::span<const double> potential) {
  const int d = strip.grid().dimension;
  (void)d;
  std::vector<double> sorted_cuts(cuts.begin(), cuts.end());
  std::sort(sorted_cuts.begin(), sorted_cuts.end());

  Domain neumann_whole(strip.grid(), strip.origin(), strip.sites(),
                       strip.geometry_tag() + "|neumann",
                       BoundaryCondition::neumann());
  Domain dirichlet_whole(strip.grid(), strip.origin(), strip.sites(),
                         strip.geometry_tag() + "|dirichlet",
                         BoundaryCondition::dirichlet());

  BracketingReport rep;
  rep.e1_neumann_whole =
      lowest_eigenpairs(assemble_hamiltonian(neumann_whole, potential), 1)
          .values[0];
  rep.e1_dirichlet_whole =
      lowest_eigenpairs(assemble_hamiltonian(dirichlet_whole, potential), 1)
          .values[0];

  // assign each site to its slab
  const int pieces = static_cast<int>(sorted_cuts.size()) + 1;
  std::vector<std::vector<IVec>> piece_sites(static_cast<std::size_t>(pieces));
  std::vector<std::vector<double>> piece_pot(static_cast<std::size_t>(pieces));
  for (int i = 0; i < strip.size(); ++i) {
    const double x0 = strip.position(i)[0];
    int slab = 0;
    while (slab < pieces - 1 && x0 > sorted_cuts[static_cast<std::size_t>(slab)])
      ++slab;
    piece_sites[static_cast<std::size_t>(slab)].push_back(strip.site(i));
    piece_pot[static_cast<std::size_t>(slab)].push_back(potential[static_cast<std::size_t>(i)]);
  }
  for (int k = 0; k < pieces; ++k)
    if (piece_sites[static_cast<std::size_t>(k)].empty())
      throw ValidationError("bracketing_check: empty sub-strip " +
                            std::to_string(k));

  rep.min_piece = std::numeric_limits<double>::infinity();
  for (int k = 0; k < pieces; ++k) {
    Domain piece(strip.grid(), strip.origin(),
                 piece_sites[static_cast<std::size_t>(k)],
                 strip.geometry_tag() + "|piece" + std::to_string(k),
                 BoundaryCondition::neumann());
    const double e1 =
        lowest_eigenpairs(
            assemble_hamiltonian(piece, piece_pot[static_cast<std::size_t>(k)]), 1)
            .values[0];
    rep.e1_pieces.push_back(e1);
    rep.min_piece = std::min(rep.min_piece, e1);
  }
  rep.slack_upper = rep.e1_dirichlet_whole - rep.e1_neumann_whole;
  rep.slack_lower = rep.e1_neumann_whole - rep.min_piece;
  return rep;
}

// ---------------------------------------------------------------------------
// First-order perturbation identity dE1/dt|_0 = <V psi_0, psi_0> for
// H(t) = H_0 + t V with Neumann background and simple ground state.

struct PerturbationReport {
  std::vector<double> t_values;
  std::vector<double> central_differences;
  double inner_product = 0.0;
  double discrepancy = 0.0;          // |best difference - inner product|
  double richardson_estimate = 0.0;  // O(t^2) error estimate from the grid
  double gap = 0.0;
};

inline PerturbationReport perturbation_derivative_check(
    const SparseOperator& H0, std::span<const double> field,
    std::span<const double> t_grid, double gap_tol = 1e-6) {
  if (t_grid.size() < 2)
    throw ValidationError("perturbation_derivative_check: need >= 2 step sizes");
  if (static_cast<int>(field.size()) != H0.n)
    throw ValidationError("perturbation_derivative_check: field length mismatch");

  EigenSolveResult base = lowest_eigenpairs(H0, std::min(2, H0.n));
  PerturbationReport rep;
  rep.gap = (H0.n >= 2) ? base.values[1] - base.values[0]
                        : std::numeric_limits<double>::infinity();
  if (!(rep.gap > gap_tol))
    throw NumericError("perturbation_derivative_check: ground state gap " +
                       std::to_string(rep.gap) + " below tolerance");

  Eigen::VectorXd psi0 = base.vectors.col(0);
  double ip = 0.0;
  for (int i = 0; i < H0.n; ++i) ip += field[i] * psi0[i] * psi0[i];
  rep.inner_product = ip;

  auto e1_at = [&](double t) {
    SparseOperator Ht = H0;
    for (int i = 0; i < H0.n; ++i)
      Ht.matrix.coeffRef(i, i) += t * field[i];
    return lowest_eigenpairs(Ht, 1).values[0];
  };

  std::vector<double> ts(t_grid.begin(), t_grid.end());
  std::sort(ts.begin(), ts.end(), std::greater<double>());
  for (double t : ts) {
    if (!(t > 0))
      throw ValidationError("perturbation_derivative_check: steps must be > 0");
    const double d = (e1_at(t) - e1_at(-t)) / (2.0 * t);
    rep.t_values.push_back(t);
    rep.central_differences.push_back(d);
  }
  const double d_small = rep.central_differences.back();
  rep.discrepancy = std::abs(d_small - rep.inner_product);
  // central differences carry O(t^2) error; two sizes give the estimate
  const double d_large = rep.central_differences.front();
  rep.richardson_estimate = std::abs(d_small - d_large) / 3.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Probability that the sample mean of n couplings drops below a threshold,
// swept over n, with the fitted exponential rate in n.

struct LargeDeviationReport {
  std::vector<int> counts;            // n sweep
  std::vector<double> probabilities;  // per n
  std::vector<int> successes;
  double fitted_slope = 0.0;          // d log P / dn (expected < 0)
  bool fit_valid = false;
  bool all_empty = false;             // no successes anywhere
};

inline LargeDeviationReport large_deviation_probe(const CouplingLaw& law,
                                                  double threshold,
                                                  std::span<const int> n_sweep,
                                                  int samples,
                                                  std::uint64_t seed,
                                                  int min_successes = 5) {
  if (!(threshold < law.mean()))
    throw ValidationError(
        "large_deviation_probe: threshold must be strictly below the mean " +
        std::to_string(law.mean()));
  LargeDeviationReport rep;
  RngStream stream = master_stream(seed).child("large-deviation");
  std::vector<double> fit_n, fit_logp;
  for (int n : n_sweep) {
    RngStream sub = stream.child(static_cast<std::uint64_t>(n));
    int hits = 0;
    for (int i = 0; i < samples; ++i) {
      double sum = 0.0;
      const std::uint64_t base = static_cast<std::uint64_t>(i) *
                                 static_cast<std::uint64_t>(n);
      for (int j = 0; j < n; ++j)
        sum += law.icdf(sub.uniform(base + static_cast<std::uint64_t>(j)));
      if (sum <= threshold * n) ++hits;
    }
    rep.counts.push_back(n);
    rep.successes.push_back(hits);
    const double p = static_cast<double>(hits) / samples;
    rep.probabilities.push_back(p);
    if (hits >= min_successes) {
      fit_n.push_back(static_cast<double>(n));
      fit_logp.push_back(std::log(p));
    }
  }
  rep.all_empty = true;
  for (int h : rep.successes)
    if (h > 0) rep.all_empty = false;
  if (fit_n.size() >= 2) {
    rep.fitted_slope = fit_line(fit_n, fit_logp).slope;
    rep.fit_valid = true;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Eigenfunction decay: unit-cube mass profile of a vector around its
// localization center, fitted to an exponential.

struct CubeMassProfile {
  std::vector<RVec> centers;
  std::vector<double> masses;     // l2 mass of the vector on each cube
  RVec localization_center{};
};

inline CubeMassProfile cube_mass_profile(const Domain& domain,
                                         const Eigen::VectorXd& v) {
  CubeMassProfile prof;
  RVec lo{}, hi{};
  domain.bounding_box(lo, hi);
  const int d = domain.grid().dimension;
  std::array<std::int64_t, 3> from{}, to{};
  for (int k = 0; k < d; ++k) {
    from[k] = static_cast<std::int64_t>(std::floor(lo[k]));
    to[k] = static_cast<std::int64_t>(std::ceil(hi[k]));
  }
  double best = -1.0;
  for (std::int64_t a = from[0]; a <= to[0]; ++a) {
    for (std::int64_t b = from[1]; b <= (d > 1 ? to[1] : from[1]); ++b) {
      for (std::int64_t c = from[2]; c <= (d > 2 ? to[2] : from[2]); ++c) {
        RVec x = {static_cast<double>(a), static_cast<double>(b),
                  static_cast<double>(c)};
        IndicatorBlock block = indicator(domain, x);
        if (block.empty()) continue;
        double mass2 = 0.0;
        for (int idx : block.indices) mass2 += v[idx] * v[idx];
        const double mass = std::sqrt(mass2);
        prof.centers.push_back(x);
        prof.masses.push_back(mass);
        if (mass > best) {
          best = mass;
          prof.localization_center = x;
        }
      }
    }
  }
  return prof;
}

inline DecayModel vector_mass_decay(const Domain& domain,
                                    const Eigen::VectorXd& v,
                                    double relative_floor = 1e-12) {
  CubeMassProfile prof = cube_mass_profile(domain, v);
  if (prof.masses.empty())
    throw NumericError("vector_mass_decay: no unit cubes meet the domain");
  const double peak =
      *std::max_element(prof.masses.begin(), prof.masses.end());
  if (!(peak > 0))
    throw NumericError("vector_mass_decay: zero vector");
  const int d = domain.grid().dimension;
  std::vector<double> rs, ms;
  for (std::size_t i = 0; i < prof.masses.size(); ++i) {
    rs.push_back(max_norm(sub(prof.centers[i], prof.localization_center), d));
    ms.push_back(prof.masses[i]);
  }
  return fit_exponential_decay(rs, ms, peak * relative_floor, 4);
}

struct EigenfunctionDecayReport {
  std::vector<double> energies;
  std::vector<DecayModel> fits;
};

inline EigenfunctionDecayReport eigenfunction_decay(const SparseOperator& op,
                                                    const Domain& domain,
                                                    double window_lo,
                                                    double window_hi) {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  full_eigensystem(op, values, vectors);
  EigenfunctionDecayReport rep;
  for (int i = 0; i < values.size(); ++i) {
    if (values[i] < window_lo || values[i] > window_hi) continue;
    rep.energies.push_back(values[i]);
    rep.fits.push_back(vector_mass_decay(domain, vectors.col(i)));
  }
  if (rep.energies.empty())
    throw ValidationError("eigenfunction_decay: window contains no eigenvalue");
  return rep;
}

// ---------------------------------------------------------------------------
// Disorder-averaged time-evolution correlator
//   E sup_t || chi_x e^{-itH} P_I(H) chi_y ||
// with the eigenfunction-sum majorant Y = sum_n ||chi_x psi_n|| ||chi_y psi_n||
// checked per realization.

struct CorrelatorPoint {
  double separation = 0.0;
  double mean_sup = 0.0;        // E sup_t over the grid
  double mean_majorant = 0.0;   // E Y
};

struct CorrelatorResult {
  std::vector<CorrelatorPoint> points;
  std::vector<double> t_grid;
  // per-t profile for the first separation (diagnostic)
  std::vector<double> first_profile;
  int realizations = 0;
  int empty_windows = 0;
};

inline CorrelatorResult dynamical_correlator_profile(
    const AlloyModel& model, const Domain& domain, double window_lo,
    double window_hi, const RVec& x0, std::span<const double> separations,
    std::span<const double> t_grid, int realizations, std::uint64_t seed,
    int workers = 1) {
  if (t_grid.empty())
    throw ValidationError("dynamical_correlator: empty time grid");
  const IndicatorBlock bx = indicator(domain, x0);
  if (bx.empty())
    throw ValidationError("dynamical_correlator: empty source block");
  std::vector<IndicatorBlock> bys;
  for (double r : separations) {
    RVec y = x0;
    y[0] += r;
    bys.push_back(indicator(domain, y));
  }

  const std::size_t S = separations.size();
  std::vector<double> sup_slots(static_cast<std::size_t>(realizations) * S, 0.0);
  std::vector<double> maj_slots(static_cast<std::size_t>(realizations) * S, 0.0);
  std::vector<double> prof_slots(static_cast<std::size_t>(realizations) *
                                     t_grid.size(),
                                 0.0);
  std::vector<int> empty_flags(static_cast<std::size_t>(realizations), 0);

  parallel_for_indexed(
      static_cast<std::size_t>(realizations), workers, [&](std::size_t rIdx) {
        SparseOperator H = model.realize(domain, seed, rIdx);
        Eigen::VectorXd values;
        Eigen::MatrixXd vectors;
        full_eigensystem(H, values, vectors);
        std::vector<int> in_window;
        for (int i = 0; i < values.size(); ++i)
          if (values[i] >= window_lo && values[i] <= window_hi)
            in_window.push_back(i);
        if (in_window.empty()) {
          empty_flags[rIdx] = 1;
          return;  // contributes zero
        }
        const int M = static_cast<int>(in_window.size());
        Eigen::MatrixXd px(bx.size(), M);  // chi_x psi_n
        for (int m = 0; m < M; ++m)
          for (int i = 0; i < bx.size(); ++i)
            px(i, m) = vectors(bx.indices[static_cast<std::size_t>(i)],
                               in_window[static_cast<std::size_t>(m)]);
        for (std::size_t sI = 0; sI < S; ++sI) {
          const IndicatorBlock& by = bys[sI];
          if (by.empty()) continue;
          Eigen::MatrixXd py(by.size(), M);
          for (int m = 0; m < M; ++m)
            for (int i = 0; i < by.size(); ++i)
              py(i, m) = vectors(by.indices[static_cast<std::size_t>(i)],
                                 in_window[static_cast<std::size_t>(m)]);
          double majorant = 0.0;
          for (int m = 0; m < M; ++m)
            majorant += px.col(m).norm() * py.col(m).norm();
          double sup = 0.0;
          Eigen::MatrixXcd block(bx.size(), by.size());
          for (std::size_t tI = 0; tI < t_grid.size(); ++tI) {
            block.setZero();
            for (int m = 0; m < M; ++m) {
              const double ph = -t_grid[tI] * values[in_window[static_cast<std::size_t>(m)]];
              const Complex phase(std::cos(ph), std::sin(ph));
              block += phase * (px.col(m) * py.col(m).transpose()).cast<Complex>();
            }
            const double nrm = block_op_norm(block);
            sup = std::max(sup, nrm);
            if (sI == 0) prof_slots[rIdx * t_grid.size() + tI] = nrm;
          }
          if (sup > majorant + 1e-9)
            throw InvariantViolation(
                "dynamical_correlator: sup_t exceeded the eigenfunction-sum bound");
          sup_slots[rIdx * S + sI] = sup;
          maj_slots[rIdx * S + sI] = majorant;
        }
      });

  CorrelatorResult res;
  res.t_grid.assign(t_grid.begin(), t_grid.end());
  res.realizations = realizations;
  for (int e : empty_flags) res.empty_windows += e;
  for (std::size_t sI = 0; sI < S; ++sI) {
    std::vector<double> sups(static_cast<std::size_t>(realizations));
    std::vector<double> majs(static_cast<std::size_t>(realizations));
    for (int r = 0; r < realizations; ++r) {
      sups[static_cast<std::size_t>(r)] = sup_slots[static_cast<std::size_t>(r) * S + sI];
      majs[static_cast<std::size_t>(r)] = maj_slots[static_cast<std::size_t>(r) * S + sI];
    }
    CorrelatorPoint pt;
    pt.separation = separations[sI];
    pt.mean_sup = pairwise_sum(sups) / realizations;
    pt.mean_majorant = pairwise_sum(majs) / realizations;
    res.points.push_back(pt);
  }
  res.first_profile.resize(t_grid.size(), 0.0);
  for (std::size_t tI = 0; tI < t_grid.size(); ++tI) {
    std::vector<double> col(static_cast<std::size_t>(realizations));
    for (int r = 0; r < realizations; ++r)
      col[static_cast<std::size_t>(r)] =
          prof_slots[static_cast<std::size_t>(r) * t_grid.size() + tI];
    res.first_profile[tI] = pairwise_sum(col) / realizations;
  }
  return res;
}

}  // namespace fmlab
