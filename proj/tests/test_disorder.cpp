#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "fmlab/disorder.hpp"

using namespace fmlab;

namespace {

AlloyModel unit_alloy(double eta_max = 1.0, double extent = 12.0) {
  AlloyModel m;
  m.grid = GridSpec{1, 1.0};
  m.profile = SingleSiteProfile::flat_box(1.0, 1.0);
  m.law = CouplingLaw::uniform(eta_max);
  m.impurities = make_lattice_impurities(1, extent, 1.0);
  return m;
}

}  // namespace

TEST_CASE("single-site profiles respect the two-sided bound") {
  auto scan = [](const SingleSiteProfile& p, int d) {
    for (double t = -2.0; t <= 2.0; t += 0.01) {
      RVec dx = rvec(t, 0.3 * t);
      const double u = p.value(dx, d);
      const double dist = max_norm(dx, d);
      CHECK(u >= 0.0);
      if (dist < 0.5 * p.r_U - 1e-6) CHECK(u >= p.c_U - 1e-12);
      if (dist >= 0.5 * p.R_U) CHECK(u == 0.0);
      CHECK(u <= p.C_U + 1e-12);
    }
  };
  scan(SingleSiteProfile::flat_box(2.0, 1.0), 2);
  scan(SingleSiteProfile::bump(0.5, 2.0, 0.5, 1.5), 2);
  CHECK_THROWS_AS(SingleSiteProfile::bump(2.0, 1.0, 0.5, 1.5), ValidationError);
}

TEST_CASE("coupling laws integrate to one and respect the density bound") {
  for (const CouplingLaw& law :
       {CouplingLaw::uniform(2.0), CouplingLaw::truncated_beta(2.0, 3.0, 1.0),
        CouplingLaw::narrow_uniform(0.9, 0.05, 1.0)}) {
    auto issues = verify_law(law);
    CAPTURE(law.describe());
    CHECK(issues.empty());
  }
  CHECK(!verify_law(CouplingLaw::degenerate(1.0, 1.0)).empty());
  CHECK_THROWS_AS(CouplingLaw::truncated_beta(0.5, 1.0, 1.0), ValidationError);
}

TEST_CASE("samplers agree with their distribution (KS at the 1% level)") {
  const int n = 10000;
  for (const CouplingLaw& law :
       {CouplingLaw::uniform(1.0), CouplingLaw::truncated_beta(2.0, 5.0, 2.0)}) {
    RngStream stream = master_stream(11).child(law.describe());
    std::vector<double> samples(n);
    for (int i = 0; i < n; ++i)
      samples[static_cast<std::size_t>(i)] =
          law.sample(stream, static_cast<std::uint64_t>(i));
    std::sort(samples.begin(), samples.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
      const double f = law.cdf(samples[static_cast<std::size_t>(i)]);
      ks = std::max(ks, std::abs(f - (i + 1.0) / n));
      ks = std::max(ks, std::abs(f - static_cast<double>(i) / n));
      CHECK(samples[static_cast<std::size_t>(i)] >= 0.0);
      CHECK(samples[static_cast<std::size_t>(i)] <= law.eta_max());
    }
    CHECK(ks < 1.63 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("beta inverse cdf round-trips") {
  CouplingLaw law = CouplingLaw::truncated_beta(3.0, 2.0, 1.5);
  for (double u : {0.01, 0.2, 0.5, 0.8, 0.99}) {
    const double eta = law.icdf(u);
    CHECK(law.cdf(eta) == Catch::Approx(u).margin(1e-9));
  }
  CHECK(law.mean() == Catch::Approx(1.5 * 3.0 / 5.0));
}

TEST_CASE("realizations are deterministic in (seed, index)") {
  AlloyModel m = unit_alloy();
  DisorderRealization a = m.sample(123, 1);
  DisorderRealization b = m.sample(123, 1);
  DisorderRealization c = m.sample(123, 2);
  REQUIRE(a.couplings.size() == b.couplings.size());
  for (std::size_t i = 0; i < a.couplings.size(); ++i)
    CHECK(a.couplings[i] == b.couplings[i]);
  bool differs = false;
  for (std::size_t i = 0; i < a.couplings.size(); ++i)
    if (a.couplings[i] != c.couplings[i]) differs = true;
  CHECK(differs);
  for (double eta : a.couplings) {
    CHECK(eta >= 0.0);
    CHECK(eta <= 1.0);
  }
}

TEST_CASE("normalized couplings balance exactly") {
  for (double eta_max : {1.0, 0.7, 3.3}) {
    CouplingLaw law = CouplingLaw::uniform(eta_max);
    ImpuritySet imps = make_lattice_impurities(1, 40.0, 1.0);
    DisorderRealization r = sample_realization(imps, law, 5, 9);
    for (std::size_t i = 0; i < r.couplings.size(); ++i)
      CHECK(r.normalized[i] + r.couplings[i] == eta_max);
  }
}

TEST_CASE("empirical mean of uniform couplings is unbiased") {
  AlloyModel m = unit_alloy();
  const int n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    DisorderRealization r = m.sample(77, static_cast<std::uint64_t>(i));
    sum += r.couplings[0];
  }
  const double mean = sum / n;
  const double sigma = 1.0 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - 0.5) < 3.0 * sigma);
}

TEST_CASE("couplings at distinct impurities are uncorrelated") {
  AlloyModel m = unit_alloy();
  const int n = 10000;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    DisorderRealization r = m.sample(31, static_cast<std::uint64_t>(i));
    const double x = r.couplings[2], y = r.couplings[7];
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double vx = sxx / n - (sx / n) * (sx / n);
  const double vy = syy / n - (sy / n) * (sy / n);
  const double corr = cov / std::sqrt(vx * vy);
  CHECK(std::abs(corr) < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("potential field reproduces hand-built configurations") {
  GridSpec g{1, 1.0};
  Domain domain = build_domain(g, Box{rvec(0.0), 6.0}, BoundaryCondition::dirichlet());
  std::vector<double> v0(static_cast<std::size_t>(domain.size()), 0.0);
  SingleSiteProfile box = SingleSiteProfile::flat_box(1.0, 1.0);

  // single impurity with unit coupling: the field is the indicator of its cube
  ImpuritySet one = make_impurity_set(1, {rvec(0.0)}, 1.0, std::nullopt,
                                      rvec(-4.0), rvec(4.0));
  DisorderRealization fixed;
  fixed.impurity_checksum = one.checksum();
  fixed.eta_max = 1.0;
  fixed.couplings = {1.0};
  fixed.normalized = {0.0};
  auto field = potential_field(fixed, one, box, v0, domain);
  for (int i = 0; i < domain.size(); ++i) {
    const double expect = std::abs(domain.position(i)[0]) < 0.5 ? 1.0 : 0.0;
    CHECK(field[static_cast<std::size_t>(i)] == expect);
  }

  // zero couplings: field equals the background pointwise
  std::vector<double> bg(static_cast<std::size_t>(domain.size()));
  for (std::size_t i = 0; i < bg.size(); ++i) bg[i] = 0.1 * static_cast<double>(i);
  fixed.couplings = {0.0};
  fixed.normalized = {1.0};
  auto field0 = potential_field(fixed, one, box, bg, domain);
  for (std::size_t i = 0; i < bg.size(); ++i) CHECK(field0[i] == bg[i]);
}

TEST_CASE("overlapping supports add pointwise") {
  GridSpec g{1, 0.25};
  Domain domain = build_domain(g, Box{rvec(0.0), 6.0}, BoundaryCondition::dirichlet());
  SingleSiteProfile bump = SingleSiteProfile::bump(0.5, 2.0, 1.0, 3.0);
  ImpuritySet two = make_impurity_set(1, {rvec(-0.5), rvec(0.75)}, 1.0,
                                      std::nullopt, rvec(-5.0), rvec(5.0));
  DisorderRealization r;
  r.impurity_checksum = two.checksum();
  r.eta_max = 2.0;
  r.couplings = {0.8, 1.4};
  r.normalized = {1.2, 0.6};
  std::vector<double> v0(static_cast<std::size_t>(domain.size()), 0.0);
  auto field = potential_field(r, two, bump, v0, domain);
  for (int i = 0; i < domain.size(); ++i) {
    const RVec p = domain.position(i);
    const double expect = 0.8 * bump.value(sub(p, rvec(-0.5)), 1) +
                          1.4 * bump.value(sub(p, rvec(0.75)), 1);
    CHECK(field[static_cast<std::size_t>(i)] ==
          Catch::Approx(expect).margin(1e-15));
  }
}

TEST_CASE("decomposition V + W = V_F holds exactly for the unit alloy") {
  AlloyModel m = unit_alloy();
  Domain domain = build_domain(m.grid, Box{rvec(0.0), 8.0}, BoundaryCondition::dirichlet());
  std::vector<double> v0(static_cast<std::size_t>(domain.size()), 0.0);
  auto vf = full_coupling_field(m.impurities, m.profile, v0, domain, 1.0);
  for (std::uint64_t idx = 0; idx < 20; ++idx) {
    DisorderRealization r = m.sample(99, idx);
    auto v = potential_field(r, m.impurities, m.profile, v0, domain);
    auto w = fluctuation_field(r, m.impurities, m.profile, domain);
    for (std::size_t i = 0; i < v.size(); ++i)
      CHECK(v[i] + w[i] == vf[i]);
  }
}

TEST_CASE("decomposition stays at rounding level for general profiles") {
  GridSpec g{2, 0.5};
  AlloyModel m;
  m.grid = g;
  m.profile = SingleSiteProfile::bump(0.3, 1.7, 1.0, 2.5);
  m.law = CouplingLaw::uniform(2.4);
  m.impurities = make_lattice_impurities(2, 10.0, 1.0, 0.2, 3);
  Domain domain = build_domain(g, Box{rvec(0.0, 0.0), 5.0}, BoundaryCondition::dirichlet());
  std::vector<double> v0(static_cast<std::size_t>(domain.size()), 0.25);
  auto vf = full_coupling_field(m.impurities, m.profile, v0, domain, 2.4);
  DisorderRealization r = m.sample(4, 0);
  auto v = potential_field(r, m.impurities, m.profile, v0, domain);
  auto w = fluctuation_field(r, m.impurities, m.profile, domain);
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(v[i] + w[i] == Catch::Approx(vf[i]).margin(1e-12));
}

TEST_CASE("degenerate law at eta_max freezes the fluctuation field") {
  AlloyModel m = unit_alloy();
  m.law = CouplingLaw::degenerate(1.0, 1.0);
  Domain domain = build_domain(m.grid, Box{rvec(0.0), 8.0}, BoundaryCondition::dirichlet());
  DisorderRealization r = m.sample(1, 0);
  auto w = fluctuation_field(r, m.impurities, m.profile, domain);
  for (double x : w) CHECK(x == 0.0);
}

TEST_CASE("eta_max = 0 collapses the full-coupling field onto the background") {
  AlloyModel m = unit_alloy();
  Domain domain = build_domain(m.grid, Box{rvec(0.0), 8.0}, BoundaryCondition::dirichlet());
  std::vector<double> v0(static_cast<std::size_t>(domain.size()), 0.7);
  auto vf = full_coupling_field(m.impurities, m.profile, v0, domain, 0.0);
  for (std::size_t i = 0; i < vf.size(); ++i) CHECK(vf[i] == v0[i]);
}

TEST_CASE("field expectation matches the analytic mean") {
  GridSpec g{1, 1.0};
  Domain domain = build_domain(g, Box{rvec(0.0), 4.0}, BoundaryCondition::dirichlet());
  ImpuritySet one = make_impurity_set(1, {rvec(0.0)}, 1.0, std::nullopt,
                                      rvec(-3.0), rvec(3.0));
  CouplingLaw law = CouplingLaw::uniform(1.0);
  SingleSiteProfile box = SingleSiteProfile::flat_box(1.0, 1.0);
  std::vector<double> v0 = {0.2, 0.2, 0.2};
  const int n = 10000;
  std::vector<double> acc(3, 0.0);
  for (int i = 0; i < n; ++i) {
    DisorderRealization r = sample_realization(one, law, 17, static_cast<std::uint64_t>(i));
    auto field = potential_field(r, one, box, v0, domain);
    for (int k = 0; k < 3; ++k)
      acc[static_cast<std::size_t>(k)] += field[static_cast<std::size_t>(k)];
  }
  const double sigma = 1.0 / std::sqrt(12.0 * n);
  CHECK(std::abs(acc[1] / n - 0.7) < 3.0 * sigma);  // covered site
  CHECK(acc[0] / n == Catch::Approx(0.2));          // outside the cube
}

TEST_CASE("margin violations are loud") {
  AlloyModel m = unit_alloy(1.0, 6.0);  // coverage radius 3
  Domain big = build_domain(m.grid, Box{rvec(0.0), 12.0}, BoundaryCondition::dirichlet());
  DisorderRealization r = m.sample(3, 0);
  std::vector<double> v0(static_cast<std::size_t>(big.size()), 0.0);
  CHECK_THROWS_AS(potential_field(r, m.impurities, m.profile, v0, big),
                  ValidationError);
}

TEST_CASE("surface impurity construction meets its count bound") {
  SurfaceSpec spec;
  spec.dimension = 2;
  spec.d1 = 1;
  spec.extent = 32.0;
  spec.r_perp = 1.0;
  spec.target_density = 1.0;
  spec.min_separation = 1.0;
  SurfaceImpurities surf = make_surface_impurities(spec);
  CHECK(surf.empirical_c_perp >= 1.0 - 1e-9);
  for (const auto& p : surf.set.points) CHECK(p[1] == 0.0);

  // packing infeasibility
  SurfaceSpec bad = spec;
  bad.target_density = 3.0;
  CHECK_THROWS_AS(make_surface_impurities(bad), ValidationError);

  // jittered lattice keeps its declared separation
  SurfaceSpec jit = spec;
  jit.jitter = 0.25;
  SurfaceImpurities js = make_surface_impurities(jit, 5);
  double rmin = 1e300;
  const auto& P = js.set.points;
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = i + 1; j < P.size(); ++j)
      rmin = std::min(rmin, max_norm(sub(P[i], P[j]), 2));
  CHECK(rmin >= 0.5 - 1e-9);
}

TEST_CASE("displaced lattices satisfy the geometric constants") {
  CHECK_THROWS_AS(make_displaced_lattice(2, 8.0, 0.4, 1), ValidationError);

  ImpuritySet exact = make_displaced_lattice(2, 8.0, 0.0, 1);
  GeometryReport exact_rep = verify_geometry(exact, std::vector<double>{4.0, 8.0});
  CHECK(exact_rep.r_I_empirical == Catch::Approx(1.0));

  ImpuritySet displaced = make_displaced_lattice(2, 10.0, 1.0 / 3.0, 9);
  const auto& P = displaced.points;
  double rmin = 1e300;
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = i + 1; j < P.size(); ++j)
      rmin = std::min(rmin, max_norm(sub(P[i], P[j]), 2));
  CHECK(rmin >= 1.0 / 3.0 - 1e-12);

  // brute-force nearest-impurity scan; the grid step 1/3 keeps every probe
  // within 1/3 of an integer point, whose impurity moved by at most 1/3
  double worst = 0.0;
  for (double x = -4.0; x <= 4.0; x += 1.0 / 3.0)
    for (double y = -4.0; y <= 4.0; y += 1.0 / 3.0) {
      double nearest = 1e300;
      for (const auto& p : P)
        nearest = std::min(nearest, max_norm(sub(rvec(x, y), p), 2));
      worst = std::max(worst, nearest);
    }
  CHECK(worst <= 2.0 / 3.0 + 1e-9);
}

TEST_CASE("geometry audit fits the volume exponent and flags violations") {
  ImpuritySet lattice = make_lattice_impurities(2, 20.0, 1.0);
  GeometryReport rep = verify_geometry(lattice, std::vector<double>{4.0, 8.0, 16.0});
  CHECK(rep.ok());
  CHECK(rep.fitted_exponent == Catch::Approx(2.0).epsilon(0.05));
  CHECK(rep.c_lower > 0.0);

  ImpuritySet broken = make_impurity_set(1, {rvec(0.0), rvec(1e-15), rvec(2.0)},
                                         1.0, std::nullopt, rvec(-3.0), rvec(3.0));
  GeometryReport bad = verify_geometry(broken, std::vector<double>{4.0});
  CHECK(!bad.ok());
}
