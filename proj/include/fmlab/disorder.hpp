#pragma once

// Random potential ensembles: coupling laws with bounded densities,
// impurity geometries (bulk lattices, surface sets, displaced lattices),
// per-realization sampling with counter-based streams, and assembly of the
// disordered and full-coupling operators.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fmlab/core.hpp"
#include "fmlab/fit.hpp"
#include "fmlab/lattice.hpp"
#include "fmlab/quadrature.hpp"

namespace fmlab {

namespace detail {

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 200;
  constexpr double kFpMin = 1e-300;
  constexpr double kEps = 3e-15;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("betacf: continued fraction did not converge");
}

inline double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Coupling laws on [0, eta_max].

class CouplingLaw {
 public:
  enum class Kind { Uniform, TruncatedBeta, NarrowUniform, Degenerate };

  static CouplingLaw uniform(double eta_max) {
    CouplingLaw law;
    law.kind_ = Kind::Uniform;
    law.eta_max_ = check_eta_max(eta_max);
    return law;
  }
  // eta/eta_max ~ Beta(a, b); a, b >= 1 keeps the density bounded.
  static CouplingLaw truncated_beta(double a, double b, double eta_max) {
    if (!(a >= 1.0) || !(b >= 1.0))
      throw ValidationError("CouplingLaw: beta shape parameters must be >= 1");
    CouplingLaw law;
    law.kind_ = Kind::TruncatedBeta;
    law.eta_max_ = check_eta_max(eta_max);
    law.a_ = a;
    law.b_ = b;
    return law;
  }
  // uniform on [center-halfwidth, center+halfwidth] inside [0, eta_max]
  static CouplingLaw narrow_uniform(double center, double halfwidth,
                                    double eta_max) {
    CouplingLaw law;
    law.kind_ = Kind::NarrowUniform;
    law.eta_max_ = check_eta_max(eta_max);
    if (!(halfwidth > 0) || center - halfwidth < -1e-12 ||
        center + halfwidth > eta_max + 1e-12)
      throw ValidationError("CouplingLaw: narrow window must lie in [0, eta_max]");
    law.a_ = center;
    law.b_ = halfwidth;
    return law;
  }
  // point mass; not absolutely continuous, intended for control experiments
  static CouplingLaw degenerate(double value, double eta_max) {
    CouplingLaw law;
    law.kind_ = Kind::Degenerate;
    law.eta_max_ = check_eta_max(eta_max);
    if (value < 0 || value > eta_max)
      throw ValidationError("CouplingLaw: degenerate value outside [0, eta_max]");
    law.a_ = value;
    return law;
  }

  Kind kind() const { return kind_; }
  double eta_max() const { return eta_max_; }
  bool absolutely_continuous() const { return kind_ != Kind::Degenerate; }

  double density(double eta) const {
    switch (kind_) {
      case Kind::Uniform:
        return (eta >= 0 && eta <= eta_max_) ? 1.0 / eta_max_ : 0.0;
      case Kind::NarrowUniform:
        return (eta >= a_ - b_ && eta <= a_ + b_) ? 1.0 / (2.0 * b_) : 0.0;
      case Kind::TruncatedBeta: {
        if (eta <= 0 || eta >= eta_max_) return 0.0;
        const double x = eta / eta_max_;
        return std::exp((a_ - 1.0) * std::log(x) +
                        (b_ - 1.0) * std::log1p(-x) -
                        detail::log_beta(a_, b_)) /
               eta_max_;
      }
      case Kind::Degenerate:
        throw NumericError("CouplingLaw: degenerate law has no density");
    }
    return 0.0;
  }

  double cdf(double eta) const {
    if (eta <= 0) return 0.0;
    if (eta >= eta_max_ && kind_ != Kind::NarrowUniform) return 1.0;
    switch (kind_) {
      case Kind::Uniform:
        return eta / eta_max_;
      case Kind::NarrowUniform:
        if (eta <= a_ - b_) return 0.0;
        if (eta >= a_ + b_) return 1.0;
        return (eta - (a_ - b_)) / (2.0 * b_);
      case Kind::TruncatedBeta:
        return detail::reg_inc_beta(a_, b_, eta / eta_max_);
      case Kind::Degenerate:
        return eta >= a_ ? 1.0 : 0.0;
    }
    return 0.0;
  }

  double icdf(double u) const {
    u = std::clamp(u, 0.0, 1.0 - 1e-16);
    switch (kind_) {
      case Kind::Uniform:
        return u * eta_max_;
      case Kind::NarrowUniform:
        return (a_ - b_) + u * 2.0 * b_;
      case Kind::Degenerate:
        return a_;
      case Kind::TruncatedBeta: {
        // bisection on the cdf, then one Newton polish
        double lo = 0.0, hi = eta_max_;
        for (int it = 0; it < 80; ++it) {
          const double mid = 0.5 * (lo + hi);
          (cdf(mid) < u ? lo : hi) = mid;
        }
        double eta = 0.5 * (lo + hi);
        const double rho = (eta > 0 && eta < eta_max_) ? density(eta) : 0.0;
        if (rho > 1e-12) {
          const double step = (cdf(eta) - u) / rho;
          const double polished = eta - step;
          if (polished > lo - 1e-12 && polished < hi + 1e-12)
            eta = std::clamp(polished, 0.0, eta_max_);
        }
        return eta;
      }
    }
    return 0.0;
  }

  double mean() const {
    switch (kind_) {
      case Kind::Uniform:
        return 0.5 * eta_max_;
      case Kind::NarrowUniform:
      case Kind::Degenerate:
        return a_;
      case Kind::TruncatedBeta:
        return eta_max_ * a_ / (a_ + b_);
    }
    return 0.0;
  }

  double density_sup() const {
    switch (kind_) {
      case Kind::Uniform:
        return 1.0 / eta_max_;
      case Kind::NarrowUniform:
        return 1.0 / (2.0 * b_);
      case Kind::Degenerate:
        return std::numeric_limits<double>::infinity();
      case Kind::TruncatedBeta: {
        if (a_ == 1.0 && b_ == 1.0) return 1.0 / eta_max_;
        if (a_ + b_ <= 2.0) return std::max(density(1e-12), density(eta_max_ - 1e-12));
        const double mode = (a_ - 1.0) / (a_ + b_ - 2.0) * eta_max_;
        return density(std::clamp(mode, 1e-300, eta_max_ - 1e-300));
      }
    }
    return 0.0;
  }

  double sample(const RngStream& stream, std::uint64_t counter) const {
    return icdf(stream.uniform(counter));
  }

  std::string describe() const {
    std::ostringstream os;
    switch (kind_) {
      case Kind::Uniform:
        os << "uniform[0," << eta_max_ << "]";
        break;
      case Kind::NarrowUniform:
        os << "narrow(" << a_ << "+-" << b_ << ")";
        break;
      case Kind::TruncatedBeta:
        os << "beta(" << a_ << "," << b_ << ") on [0," << eta_max_ << "]";
        break;
      case Kind::Degenerate:
        os << "degenerate(" << a_ << ")";
        break;
    }
    return os.str();
  }

  std::uint64_t checksum() const {
    ByteHasher h;
    h.add_pod(static_cast<int>(kind_));
    h.add_pod(eta_max_);
    h.add_pod(a_);
    h.add_pod(b_);
    return h.digest();
  }

 private:
  static double check_eta_max(double eta_max) {
    if (!(eta_max >= 0) || !std::isfinite(eta_max))
      throw ValidationError("CouplingLaw: eta_max must be finite and >= 0");
    return eta_max;
  }

  Kind kind_ = Kind::Uniform;
  double eta_max_ = 1.0;
  double a_ = 0.0, b_ = 0.0;
};

// Quadrature checks of the law invariants; returns human-readable issues.
inline std::vector<std::string> verify_law(const CouplingLaw& law,
                                           int grid_points = 4096) {
  std::vector<std::string> issues;
  if (!law.absolutely_continuous()) {
    issues.push_back("law is not absolutely continuous");
    return issues;
  }
  // panel split so that narrow densities cannot slip between sample points
  double mass = 0.0;
  const int panels = 64;
  for (int p = 0; p < panels; ++p) {
    const double a = law.eta_max() * p / panels;
    const double b = law.eta_max() * (p + 1) / panels;
    mass += adaptive_simpson([&](double eta) { return law.density(eta); }, a, b,
                             1e-13);
  }
  if (std::abs(mass - 1.0) > 1e-8)
    issues.push_back("density mass deviates from 1 by " +
                     std::to_string(std::abs(mass - 1.0)));
  const double sup = law.density_sup();
  for (int i = 1; i < grid_points; ++i) {
    const double eta = law.eta_max() * i / grid_points;
    if (law.density(eta) > sup * (1.0 + 1e-9)) {
      issues.push_back("density exceeds declared sup at eta=" +
                       std::to_string(eta));
      break;
    }
  }
  return issues;
}

// ---------------------------------------------------------------------------
// Single-site profiles, max-norm radial.

struct SingleSiteProfile {
  enum class Shape { FlatBox, Bump };

  double c_U = 1.0;
  double C_U = 1.0;
  double r_U = 1.0;
  double R_U = 1.0;
  Shape shape = Shape::FlatBox;

  static SingleSiteProfile flat_box(double height, double width) {
    SingleSiteProfile p;
    p.c_U = p.C_U = height;
    p.r_U = p.R_U = width;
    p.validate();
    return p;
  }
  static SingleSiteProfile bump(double c, double C, double r, double R) {
    SingleSiteProfile p;
    p.c_U = c;
    p.C_U = C;
    p.r_U = r;
    p.R_U = R;
    p.shape = Shape::Bump;
    p.validate();
    return p;
  }

  void validate() const {
    if (!(c_U > 0) || !(C_U >= c_U))
      throw ValidationError("SingleSiteProfile: need 0 < c_U <= C_U");
    if (!(r_U > 0) || !(R_U >= r_U))
      throw ValidationError("SingleSiteProfile: need 0 < r_U <= R_U");
  }

  // profile at displacement dx from the impurity
  double value(const RVec& dx, int d) const {
    const double t = max_norm(dx, d);
    if (shape == Shape::FlatBox) return (t < 0.5 * r_U - kGeomTol) ? C_U : 0.0;
    if (t < 0.5 * r_U - kGeomTol) return C_U;
    if (t >= 0.5 * R_U - kGeomTol) return 0.0;
    return C_U * (0.5 * R_U - t) / (0.5 * (R_U - r_U));
  }

  std::uint64_t checksum() const {
    ByteHasher h;
    h.add_pod(c_U);
    h.add_pod(C_U);
    h.add_pod(r_U);
    h.add_pod(R_U);
    h.add_pod(static_cast<int>(shape));
    return h.digest();
  }
};

// ---------------------------------------------------------------------------
// Impurity sets.

struct ImpuritySet {
  int dimension = 1;
  std::vector<RVec> points;  // kept in lexicographic order; index = rank
  double min_separation = 0.0;                  // declared r_I
  std::optional<double> denseness_radius;       // declared R_I
  RVec coverage_lo{}, coverage_hi{};            // materialized region

  int size() const { return static_cast<int>(points.size()); }

  std::uint64_t checksum() const {
    ByteHasher h;
    h.add_pod(dimension);
    h.add_pod(min_separation);
    h.add_pod(denseness_radius.value_or(-1.0));
    h.add_pod(coverage_lo);
    h.add_pod(coverage_hi);
    for (const auto& p : points) h.add_pod(p);
    return h.digest();
  }
};

inline ImpuritySet make_impurity_set(int dimension, std::vector<RVec> points,
                                     double min_separation,
                                     std::optional<double> denseness_radius,
                                     RVec coverage_lo, RVec coverage_hi) {
  if (points.empty()) throw ValidationError("ImpuritySet: no points");
  std::sort(points.begin(), points.end());
  ImpuritySet set;
  set.dimension = dimension;
  set.points = std::move(points);
  set.min_separation = min_separation;
  set.denseness_radius = denseness_radius;
  set.coverage_lo = coverage_lo;
  set.coverage_hi = coverage_hi;
  return set;
}

// Bulk lattice with spacing `spacing` covering Lambda_extent(0), optionally
// jittered by +-jitter in every coordinate (max-norm).
inline ImpuritySet make_lattice_impurities(int dimension, double extent,
                                           double spacing, double jitter = 0.0,
                                           std::uint64_t seed = 0) {
  if (!(spacing > 0)) throw ValidationError("lattice impurities: spacing must be > 0");
  if (jitter < 0 || 2.0 * jitter >= spacing)
    throw ValidationError("lattice impurities: jitter must satisfy 0 <= 2*jitter < spacing");
  const auto k_max = static_cast<std::int64_t>(std::floor(0.5 * extent / spacing + kGeomTol));
  RngStream stream = master_stream(seed).child("lattice-impurities");
  std::vector<RVec> pts;
  std::vector<std::int64_t> ks;
  for (std::int64_t k = -k_max; k <= k_max; ++k) ks.push_back(k);
  const int m = static_cast<int>(ks.size());
  auto emit = [&](std::int64_t a, std::int64_t b, std::int64_t c,
                  std::uint64_t rank) {
    RVec p = {a * spacing, b * spacing, c * spacing};
    if (jitter > 0) {
      RngStream sub = stream.child(rank);
      for (int kk = 0; kk < dimension; ++kk)
        p[kk] += (2.0 * sub.uniform(static_cast<std::uint64_t>(kk)) - 1.0) * jitter;
    }
    pts.push_back(p);
  };
  std::uint64_t rank = 0;
  for (int i = 0; i < m; ++i) {
    if (dimension == 1) {
      emit(ks[i], 0, 0, rank++);
      continue;
    }
    for (int j = 0; j < m; ++j) {
      if (dimension == 2) {
        emit(ks[i], ks[j], 0, rank++);
        continue;
      }
      for (int l = 0; l < m; ++l) emit(ks[i], ks[j], ks[l], rank++);
    }
  }
  RVec lo{}, hi{};
  for (int k = 0; k < dimension; ++k) {
    lo[k] = -0.5 * extent;
    hi[k] = 0.5 * extent;
  }
  return make_impurity_set(dimension, std::move(pts), spacing - 2.0 * jitter,
                           spacing * 0.5 + jitter, lo, hi);
}

struct SurfaceSpec {
  int dimension = 2;
  int d1 = 1;
  double extent = 16.0;          // surface window Lambda_extent(0) in x_1
  double r_perp = 1.0;           // impurities inside |x_perp| <= r_perp/2
  double target_density = 1.0;   // points per unit d1-volume
  double min_separation = 0.5;   // requested r_I
  double jitter = 0.0;
  double bulk_spacing = 0.0;     // 0 disables sparse bulk points
  double bulk_extent = 0.0;      // transverse extent for bulk points
};

struct SurfaceImpurities {
  ImpuritySet set;
  double empirical_c_perp = 0.0;  // min over L of count / L^{d1}
};

inline SurfaceImpurities make_surface_impurities(const SurfaceSpec& spec,
                                                 std::uint64_t seed = 0) {
  if (spec.d1 < 1 || spec.d1 >= spec.dimension)
    throw ValidationError("surface impurities: need 1 <= d1 < d");
  const double spacing = std::pow(1.0 / spec.target_density, 1.0 / spec.d1);
  const double packing = std::pow(1.0 / spec.min_separation, spec.d1);
  if (spec.target_density > packing + 1e-12) {
    std::ostringstream os;
    os << "surface impurities: target density " << spec.target_density
       << " exceeds the packing bound (1/r_I)^d1 = " << packing
       << " for r_I = " << spec.min_separation;
    throw ValidationError(os.str());
  }
  if (2.0 * spec.jitter >= spacing)
    throw ValidationError("surface impurities: jitter too large for spacing");

  RngStream stream = master_stream(seed).child("surface-impurities");
  const auto k_max =
      static_cast<std::int64_t>(std::floor(0.5 * spec.extent / spacing + kGeomTol));
  std::vector<RVec> pts;
  std::uint64_t rank = 0;
  auto emit_surface = [&](std::int64_t a, std::int64_t b) {
    RVec p{};
    p[0] = a * spacing;
    if (spec.d1 == 2) p[1] = b * spacing;
    if (spec.jitter > 0) {
      RngStream sub = stream.child(rank);
      for (int kk = 0; kk < spec.d1; ++kk)
        p[kk] += (2.0 * sub.uniform(static_cast<std::uint64_t>(kk)) - 1.0) * spec.jitter;
      for (int kk = spec.d1; kk < spec.dimension; ++kk) {
        double t = (2.0 * sub.uniform(static_cast<std::uint64_t>(kk)) - 1.0) * spec.jitter;
        p[kk] = std::clamp(t, -0.5 * spec.r_perp, 0.5 * spec.r_perp);
      }
    }
    ++rank;
    pts.push_back(p);
  };
  for (std::int64_t a = -k_max; a <= k_max; ++a) {
    if (spec.d1 == 1) {
      emit_surface(a, 0);
      continue;
    }
    for (std::int64_t b = -k_max; b <= k_max; ++b) emit_surface(a, b);
  }

  // optional sparse bulk points away from the surface layer
  if (spec.bulk_spacing > 0 && spec.bulk_extent > 0) {
    const auto bk =
        static_cast<std::int64_t>(std::floor(0.5 * spec.bulk_extent / spec.bulk_spacing));
    for (std::int64_t a = -bk; a <= bk; ++a) {
      for (std::int64_t b = 1; b <= bk; ++b) {
        for (int sign = -1; sign <= 1; sign += 2) {
          RVec p{};
          p[0] = a * spec.bulk_spacing;
          p[spec.dimension - 1] = sign * (0.5 * spec.r_perp + b * spec.bulk_spacing);
          pts.push_back(p);
        }
      }
    }
  }

  RVec lo{}, hi{};
  for (int k = 0; k < spec.d1; ++k) {
    lo[k] = -0.5 * spec.extent;
    hi[k] = 0.5 * spec.extent;
  }
  for (int k = spec.d1; k < spec.dimension; ++k) {
    const double w = std::max(0.5 * spec.r_perp,
                              spec.bulk_extent > 0 ? 0.5 * spec.bulk_extent : 0.0);
    lo[k] = -w;
    hi[k] = w;
  }
  SurfaceImpurities out;
  out.set = make_impurity_set(spec.dimension, std::move(pts),
                              spacing - 2.0 * spec.jitter, std::nullopt, lo, hi);

  // all-pairs separation check against the declared r_I
  const auto& P = out.set.points;
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = i + 1; j < P.size(); ++j)
      if (max_norm(sub(P[i], P[j]), spec.dimension) <
          out.set.min_separation - 1e-9)
        throw InvariantViolation("surface impurities: separation below declared r_I");

  // empirical c_perp over a dyadic sweep of half-open windows [-L/2, L/2)
  double c_perp = std::numeric_limits<double>::infinity();
  for (double L = 4.0; L <= spec.extent; L *= 2.0) {
    int count = 0;
    for (const auto& p : P) {
      bool in = true;
      for (int k = 0; k < spec.d1; ++k)
        if (p[k] < -0.5 * L - kGeomTol || p[k] >= 0.5 * L - kGeomTol) in = false;
      for (int k = spec.d1; k < spec.dimension; ++k)
        if (std::abs(p[k]) > 0.5 * spec.r_perp) in = false;
      if (in) ++count;
    }
    c_perp = std::min(c_perp, count / std::pow(L, spec.d1));
  }
  out.empirical_c_perp = c_perp;
  return out;
}

// Integer lattice displaced by independent per-site vectors of max-norm
// length at most `max_displacement` (<= 1/3).
inline ImpuritySet make_displaced_lattice(int dimension, double extent,
                                          double max_displacement,
                                          std::uint64_t seed) {
  if (max_displacement > 1.0 / 3.0 + 1e-12 || max_displacement < 0)
    throw ValidationError("displaced lattice: displacement must lie in [0, 1/3]");
  RngStream stream = master_stream(seed).child("displaced-lattice");
  const auto k_max = static_cast<std::int64_t>(std::floor(0.5 * extent + kGeomTol));
  std::vector<RVec> pts;
  std::uint64_t rank = 0;
  auto emit = [&](std::int64_t a, std::int64_t b, std::int64_t c) {
    RVec p = {static_cast<double>(a), static_cast<double>(b),
              static_cast<double>(c)};
    RngStream sub = stream.child(rank++);
    for (int kk = 0; kk < dimension; ++kk)
      p[kk] += (2.0 * sub.uniform(static_cast<std::uint64_t>(kk)) - 1.0) *
               max_displacement;
    pts.push_back(p);
  };
  for (std::int64_t a = -k_max; a <= k_max; ++a) {
    if (dimension == 1) {
      emit(a, 0, 0);
      continue;
    }
    for (std::int64_t b = -k_max; b <= k_max; ++b) {
      if (dimension == 2) {
        emit(a, b, 0);
        continue;
      }
      for (std::int64_t c = -k_max; c <= k_max; ++c) emit(a, b, c);
    }
  }
  RVec lo{}, hi{};
  for (int k = 0; k < dimension; ++k) {
    lo[k] = -0.5 * extent;
    hi[k] = 0.5 * extent;
  }
  return make_impurity_set(dimension, std::move(pts),
                           1.0 - 2.0 * max_displacement,
                           0.5 + max_displacement, lo, hi);
}

// ---------------------------------------------------------------------------
// Realizations.

struct DisorderRealization {
  std::uint64_t impurity_checksum = 0;
  double eta_max = 0.0;
  std::vector<double> couplings;    // eta_alpha, ordered by impurity rank
  std::vector<double> normalized;   // xi_alpha = eta_max - eta_alpha
  std::uint64_t master_seed = 0;
  std::uint64_t index = 0;
};

// Rounds (eta, xi) so that xi + eta == eta_max holds exactly in floating
// point; converges in one or two sweeps.
inline std::pair<double, double> split_coupling(double eta_max, double eta_raw) {
  double eta = std::clamp(eta_raw, 0.0, eta_max);
  double xi = eta_max - eta;
  for (int it = 0; it < 8; ++it) {
    if (xi + eta == eta_max) return {eta, xi};
    eta = eta_max - xi;
    xi = eta_max - eta;
  }
  throw NumericError("split_coupling: could not balance couplings");
}

inline DisorderRealization sample_realization(const ImpuritySet& impurities,
                                              const CouplingLaw& law,
                                              std::uint64_t seed,
                                              std::uint64_t index) {
  DisorderRealization r;
  r.impurity_checksum = impurities.checksum();
  r.eta_max = law.eta_max();
  r.master_seed = seed;
  r.index = index;
  const RngStream stream =
      master_stream(seed).child("realization").child(index);
  r.couplings.resize(impurities.points.size());
  r.normalized.resize(impurities.points.size());
  for (std::size_t rank = 0; rank < impurities.points.size(); ++rank) {
    const double raw = law.sample(stream, rank);
    auto [eta, xi] = split_coupling(law.eta_max(), raw);
    r.couplings[rank] = eta;
    r.normalized[rank] = xi;
  }
  return r;
}

namespace detail {

inline void check_margin(const ImpuritySet& impurities, const Domain& domain,
                         double R_U) {
  RVec lo{}, hi{};
  domain.bounding_box(lo, hi);
  for (int k = 0; k < domain.grid().dimension; ++k) {
    const double need_lo = lo[k] - 0.5 * R_U;
    const double need_hi = hi[k] + 0.5 * R_U;
    if (impurities.coverage_lo[k] > need_lo + 1e-9 ||
        impurities.coverage_hi[k] < need_hi - 1e-9) {
      std::ostringstream os;
      os << "potential_field: impurity coverage [" << impurities.coverage_lo[k]
         << "," << impurities.coverage_hi[k] << "] on axis " << k
         << " does not include the domain inflated by R_U/2 = [" << need_lo
         << "," << need_hi << "]";
      throw ValidationError(os.str());
    }
  }
}

// shared accumulation: per site, contributions in impurity-rank order,
// summed with the fixed pairwise tree
inline std::vector<double> field_from_couplings(
    const ImpuritySet& impurities, std::span<const double> couplings,
    const SingleSiteProfile& profile, const std::vector<double>* background,
    const Domain& domain) {
  const int d = domain.grid().dimension;
  std::vector<double> field(static_cast<std::size_t>(domain.size()), 0.0);
  std::vector<double> terms;
  for (int i = 0; i < domain.size(); ++i) {
    const RVec p = domain.position(i);
    terms.clear();
    for (std::size_t a = 0; a < impurities.points.size(); ++a) {
      const double u = profile.value(sub(p, impurities.points[a]), d);
      if (u != 0.0) terms.push_back(couplings[a] * u);
    }
    double v = pairwise_sum(terms);
    if (background) v = (*background)[static_cast<std::size_t>(i)] + v;
    field[static_cast<std::size_t>(i)] = v;
  }
  return field;
}

}  // namespace detail

// V_omega = V_0 + sum_alpha eta_alpha U_alpha on the domain sites.
inline std::vector<double> potential_field(const DisorderRealization& realization,
                                           const ImpuritySet& impurities,
                                           const SingleSiteProfile& profile,
                                           const std::vector<double>& background,
                                           const Domain& domain) {
  if (realization.impurity_checksum != impurities.checksum())
    throw ValidationError("potential_field: realization belongs to a different impurity set");
  if (static_cast<int>(background.size()) != domain.size())
    throw ValidationError("potential_field: background length mismatch");
  detail::check_margin(impurities, domain, profile.R_U);
  return detail::field_from_couplings(impurities, realization.couplings,
                                      profile, &background, domain);
}

// W_omega = sum_alpha xi_alpha U_alpha (no background).
inline std::vector<double> fluctuation_field(const DisorderRealization& realization,
                                             const ImpuritySet& impurities,
                                             const SingleSiteProfile& profile,
                                             const Domain& domain) {
  if (realization.impurity_checksum != impurities.checksum())
    throw ValidationError("fluctuation_field: realization belongs to a different impurity set");
  detail::check_margin(impurities, domain, profile.R_U);
  return detail::field_from_couplings(impurities, realization.normalized,
                                      profile, nullptr, domain);
}

// V_F = V_0 + eta_max sum_alpha U_alpha.
inline std::vector<double> full_coupling_field(const ImpuritySet& impurities,
                                               const SingleSiteProfile& profile,
                                               const std::vector<double>& background,
                                               const Domain& domain,
                                               double eta_max) {
  if (static_cast<int>(background.size()) != domain.size())
    throw ValidationError("full_coupling_field: background length mismatch");
  detail::check_margin(impurities, domain, profile.R_U);
  std::vector<double> full(impurities.points.size(), eta_max);
  return detail::field_from_couplings(impurities, full, profile, &background,
                                      domain);
}

// ---------------------------------------------------------------------------
// Geometry audit.

struct WindowCount {
  double L = 0.0;
  int count = 0;
};

struct GeometryReport {
  double r_I_empirical = 0.0;
  double R_I_empirical = 0.0;
  std::vector<WindowCount> counts;
  double fitted_exponent = 0.0;
  double c_lower = 0.0;  // min count / L^d over the sweep
  double C_upper = 0.0;  // max count / L^d over the sweep
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

inline GeometryReport verify_geometry(const ImpuritySet& impurities,
                                      std::span<const double> L_sweep,
                                      double probe_spacing = 0.25) {
  if (impurities.points.empty())
    throw ValidationError("verify_geometry: empty impurity set");
  GeometryReport rep;
  const int d = impurities.dimension;
  const auto& P = impurities.points;

  double rmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = i + 1; j < P.size(); ++j)
      rmin = std::min(rmin, max_norm(sub(P[i], P[j]), d));
  rep.r_I_empirical = (P.size() > 1) ? rmin : std::numeric_limits<double>::infinity();
  if (P.size() > 1 && rmin < impurities.min_separation - 1e-9)
    rep.violations.push_back("uniform discreteness violated: empirical r_I " +
                             std::to_string(rmin) + " < declared " +
                             std::to_string(impurities.min_separation));

  // nearest-impurity scan over a probe grid of the coverage region
  double rmax = 0.0;
  std::array<std::int64_t, 3> steps = {1, 1, 1};
  for (int k = 0; k < d; ++k)
    steps[k] = std::max<std::int64_t>(
        1, static_cast<std::int64_t>((impurities.coverage_hi[k] -
                                      impurities.coverage_lo[k]) /
                                     probe_spacing));
  for (std::int64_t a = 0; a <= steps[0]; ++a) {
    for (std::int64_t b = 0; b <= (d > 1 ? steps[1] : 0); ++b) {
      for (std::int64_t c = 0; c <= (d > 2 ? steps[2] : 0); ++c) {
        RVec q = impurities.coverage_lo;
        q[0] += (impurities.coverage_hi[0] - impurities.coverage_lo[0]) *
                static_cast<double>(a) / static_cast<double>(steps[0]);
        if (d > 1)
          q[1] += (impurities.coverage_hi[1] - impurities.coverage_lo[1]) *
                  static_cast<double>(b) / static_cast<double>(steps[1]);
        if (d > 2)
          q[2] += (impurities.coverage_hi[2] - impurities.coverage_lo[2]) *
                  static_cast<double>(c) / static_cast<double>(steps[2]);
        double nearest = std::numeric_limits<double>::infinity();
        for (const auto& p : P) nearest = std::min(nearest, max_norm(sub(q, p), d));
        rmax = std::max(rmax, nearest);
      }
    }
  }
  rep.R_I_empirical = rmax;
  if (impurities.denseness_radius &&
      rmax > *impurities.denseness_radius + 1e-9)
    rep.violations.push_back("uniform denseness violated: empirical R_I " +
                             std::to_string(rmax) + " > declared " +
                             std::to_string(*impurities.denseness_radius));

  // half-open windows [-L/2, L/2)^d tile space, so an exact lattice counts
  // exactly L^d and the fitted exponent is clean
  std::vector<double> logL, logC;
  rep.c_lower = std::numeric_limits<double>::infinity();
  rep.C_upper = 0.0;
  for (double L : L_sweep) {
    int count = 0;
    for (const auto& p : P) {
      bool in = true;
      for (int k = 0; k < d; ++k)
        if (p[k] < -0.5 * L - kGeomTol || p[k] >= 0.5 * L - kGeomTol) in = false;
      if (in) ++count;
    }
    rep.counts.push_back({L, count});
    if (count > 0) {
      logL.push_back(std::log(L));
      logC.push_back(std::log(static_cast<double>(count)));
      rep.c_lower = std::min(rep.c_lower, count / std::pow(L, d));
      rep.C_upper = std::max(rep.C_upper, count / std::pow(L, d));
    }
  }
  if (logL.size() >= 2) rep.fitted_exponent = fit_line(logL, logC).slope;
  return rep;
}

// ---------------------------------------------------------------------------
// Background potentials evaluable at arbitrary points (domains of different
// scales share one definition).

struct PotentialSpec {
  enum class Kind { Constant, SquareWell };
  Kind kind = Kind::Constant;
  double level = 0.0;
  RVec well_center{};
  double well_side = 0.0;
  double well_depth = 0.0;  // added inside the well (negative = attractive)

  static PotentialSpec constant(double level) {
    PotentialSpec p;
    p.level = level;
    return p;
  }
  static PotentialSpec square_well(double level, RVec center, double side,
                                   double depth) {
    PotentialSpec p;
    p.kind = Kind::SquareWell;
    p.level = level;
    p.well_center = center;
    p.well_side = side;
    p.well_depth = depth;
    return p;
  }

  double value(const RVec& p, int d) const {
    if (kind == Kind::Constant) return level;
    return (max_norm(sub(p, well_center), d) < 0.5 * well_side - kGeomTol)
               ? level + well_depth
               : level;
  }

  std::uint64_t checksum() const {
    ByteHasher h;
    h.add_pod(static_cast<int>(kind));
    h.add_pod(level);
    h.add_pod(well_center);
    h.add_pod(well_side);
    h.add_pod(well_depth);
    return h.digest();
  }
};

// ---------------------------------------------------------------------------
// An alloy ensemble: everything needed to realize H(omega) on a Domain.

struct AlloyModel {
  GridSpec grid;
  BoundaryCondition bc = BoundaryCondition::dirichlet();
  PotentialSpec background = PotentialSpec::constant(0.0);
  SingleSiteProfile profile = SingleSiteProfile::flat_box(1.0, 1.0);
  CouplingLaw law = CouplingLaw::uniform(1.0);
  ImpuritySet impurities;

  std::uint64_t checksum() const {
    ByteHasher h;
    h.add_pod(grid.dimension);
    h.add_pod(grid.spacing);
    h.add_string(bc.tag());
    h.add_pod(background.checksum());
    h.add_pod(profile.checksum());
    h.add_pod(law.checksum());
    h.add_pod(impurities.checksum());
    return h.digest();
  }

  std::vector<double> background_on(const Domain& domain) const {
    std::vector<double> v(static_cast<std::size_t>(domain.size()));
    for (int i = 0; i < domain.size(); ++i)
      v[static_cast<std::size_t>(i)] =
          background.value(domain.position(i), grid.dimension);
    return v;
  }

  DisorderRealization sample(std::uint64_t seed, std::uint64_t index) const {
    return sample_realization(impurities, law, seed, index);
  }

  std::vector<double> potential_on(const Domain& domain,
                                   const DisorderRealization& r) const {
    return potential_field(r, impurities, profile, background_on(domain), domain);
  }

  SparseOperator realize(const Domain& domain, std::uint64_t seed,
                         std::uint64_t index) const {
    return assemble_hamiltonian(domain, potential_on(domain, sample(seed, index)));
  }

  SparseOperator background_operator(const Domain& domain) const {
    return assemble_hamiltonian(domain, background_on(domain));
  }

  SparseOperator full_coupling_operator(const Domain& domain) const {
    return assemble_hamiltonian(
        domain, full_coupling_field(impurities, profile, background_on(domain),
                                    domain, law.eta_max()));
  }
};

}  // namespace fmlab
