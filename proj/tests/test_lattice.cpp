#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "fmlab/eigensolve.hpp"
#include "fmlab/lattice.hpp"

using namespace fmlab;

namespace {
double dense_lowest(const SparseOperator& op) {
  Eigen::MatrixXd dense(op.matrix);
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense).eigenvalues()(0);
}
}  // namespace

TEST_CASE("box domains enumerate the interior lattice points") {
  GridSpec g1{1, 1.0};
  Domain d1 = build_domain(g1, Box{rvec(0.0), 4.0}, BoundaryCondition::dirichlet());
  REQUIRE(d1.size() == 3);
  CHECK(d1.position(0)[0] == Catch::Approx(-1.0));
  CHECK(d1.position(1)[0] == Catch::Approx(0.0));
  CHECK(d1.position(2)[0] == Catch::Approx(1.0));

  GridSpec g2{2, 0.5};
  Domain d2 = build_domain(g2, Box{rvec(0.0, 0.0), 2.0}, BoundaryCondition::dirichlet());
  REQUIRE(d2.size() == 9);

  GridSpec g3{2, 1.0};
  Domain strip = build_domain(g3, StripGeom{{0.0}, 5.0, 7.0},
                              BoundaryCondition::dirichlet());
  // brute-force count of the grid nodes strictly inside (-2.5,2.5)x(-3.5,3.5)
  REQUIRE(strip.size() == 4 * 6);
}

TEST_CASE("degenerate regions raise EmptyDomain") {
  GridSpec g{1, 1.0};
  CHECK_THROWS_AS(build_domain(g, Box{rvec(0.0), 0.5}, BoundaryCondition::dirichlet()),
                  EmptyDomainError);
  Domain d = build_domain(g, Box{rvec(0.0), 10.0}, BoundaryCondition::dirichlet());
  CHECK_THROWS_AS(restrict_domain(d, Box{rvec(100.0), 2.0}), EmptyDomainError);
}

TEST_CASE("free Hamiltonian matches the analytic Dirichlet spectrum") {
  GridSpec g{1, 1.0};
  Domain d = build_domain(g, Box{rvec(0.0), 4.0}, BoundaryCondition::dirichlet());
  std::vector<double> zero(3, 0.0);
  SparseOperator H = assemble_hamiltonian(d, zero);

  Eigen::MatrixXd dense(H.matrix);
  CHECK(dense(0, 0) == 2.0);
  CHECK(dense(0, 1) == -1.0);
  CHECK(dense(1, 0) == -1.0);
  Eigen::VectorXd ev =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense).eigenvalues();
  CHECK(ev(0) == Catch::Approx(2.0 - std::sqrt(2.0)).margin(1e-12));
  CHECK(ev(1) == Catch::Approx(2.0).margin(1e-12));
  CHECK(ev(2) == Catch::Approx(2.0 + std::sqrt(2.0)).margin(1e-12));

  // constant potential shifts the spectrum exactly
  std::vector<double> five(3, 5.0);
  Eigen::MatrixXd shifted(assemble_hamiltonian(d, five).matrix);
  Eigen::VectorXd ev5 =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(shifted).eigenvalues();
  for (int i = 0; i < 3; ++i) CHECK(ev5(i) == Catch::Approx(ev(i) + 5.0).margin(1e-12));
}

TEST_CASE("2x2 free box has lowest eigenvalue 2") {
  GridSpec g{2, 1.0};
  Domain d = build_domain(g, Box{rvec(0.0, 0.0), 3.0}, BoundaryCondition::dirichlet());
  REQUIRE(d.size() == 4);
  std::vector<double> zero(4, 0.0);
  SparseOperator H = assemble_hamiltonian(d, zero);
  CHECK(dense_lowest(H) == Catch::Approx(2.0).margin(1e-10));
}

TEST_CASE("assembly validates input") {
  GridSpec g{1, 1.0};
  Domain d = build_domain(g, Box{rvec(0.0), 4.0}, BoundaryCondition::dirichlet());
  std::vector<double> bad(2, 0.0);
  CHECK_THROWS_AS(assemble_hamiltonian(d, bad), ValidationError);
  std::vector<double> nan(3, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(assemble_hamiltonian(d, nan), ValidationError);
}

TEST_CASE("operators are exactly symmetric and bit-stable") {
  GridSpec g{2, 0.5};
  Domain d = build_domain(g, Box{rvec(0.0, 0.0), 4.0}, BoundaryCondition::dirichlet());
  std::vector<double> v(static_cast<std::size_t>(d.size()));
  RngStream rng = master_stream(7).child("pot");
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(i);

  SparseOperator a = assemble_hamiltonian(d, v);
  SparseOperator b = assemble_hamiltonian(d, v);

  Eigen::MatrixXd da(a.matrix);
  CHECK((da - da.transpose()).cwiseAbs().maxCoeff() == 0.0);

  REQUIRE(a.matrix.nonZeros() == b.matrix.nonZeros());
  for (int k = 0; k < a.matrix.outerSize(); ++k) {
    Eigen::SparseMatrix<double>::InnerIterator ia(a.matrix, k), ib(b.matrix, k);
    for (; ia && ib; ++ia, ++ib) {
      CHECK(ia.row() == ib.row());
      CHECK(ia.value() == ib.value());
    }
  }
  CHECK(a.checksum() == b.checksum());
}

TEST_CASE("restriction is monotone for Dirichlet boxes") {
  GridSpec g{1, 1.0};
  Domain parent = build_domain(g, Box{rvec(0.0), 10.0}, BoundaryCondition::dirichlet());
  REQUIRE(parent.size() == 9);
  Domain sub = restrict_domain(parent, Box{rvec(0.0), 6.0});
  REQUIRE(sub.size() == 5);

  std::vector<double> zp(9, 0.0), zs(5, 0.0);
  const double ep = dense_lowest(assemble_hamiltonian(parent, zp));
  const double es = dense_lowest(assemble_hamiltonian(sub, zs));
  CHECK(es >= ep - 1e-10);

  // identity restriction returns the same sites
  Domain same = restrict_domain(parent, Box{rvec(0.0), 10.0});
  CHECK(same.size() == parent.size());
  CHECK(same.checksum() == parent.checksum());
}

TEST_CASE("annulus restriction lifts the ground state") {
  GridSpec g{2, 1.0};
  Domain parent = build_domain(g, Box{rvec(0.0, 0.0), 6.0}, BoundaryCondition::dirichlet());
  REQUIRE(parent.size() == 25);
  Domain ring = restrict_domain(restrict_domain(parent, Box{rvec(0.0, 0.0), 5.0}),
                                BoxComplement{rvec(0.0, 0.0), 3.0, false});
  REQUIRE(ring.size() == 16);
  std::vector<double> zp(25, 0.0), zr(16, 0.0);
  const double ep = dense_lowest(assemble_hamiltonian(parent, zp));
  const double er = dense_lowest(assemble_hamiltonian(ring, zr));
  CHECK(er >= 2.0 * ep);
}

TEST_CASE("Dirichlet monotonicity holds for random restrictions") {
  RngStream rng = master_stream(42).child("monotone");
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    RngStream t = rng.child(trial);
    const int dim = 1 + static_cast<int>(t.bits(0) % 2);
    GridSpec g{dim, 0.5 + 0.5 * t.uniform(1)};
    const double side = 6.0 + 6.0 * t.uniform(2);
    Domain parent = build_domain(g, Box{rvec(0.0, 0.0), side},
                                 BoundaryCondition::dirichlet());
    const double sub_side = side * (0.4 + 0.5 * t.uniform(3));
    Domain sub = [&]() -> Domain {
      try {
        return restrict_domain(parent, Box{rvec(0.0, 0.0), sub_side});
      } catch (const EmptyDomainError&) {
        return parent;
      }
    }();
    std::vector<double> vp(static_cast<std::size_t>(parent.size()));
    for (std::size_t i = 0; i < vp.size(); ++i) vp[i] = 3.0 * t.uniform(100 + i);
    std::vector<double> vs(static_cast<std::size_t>(sub.size()));
    for (int i = 0; i < sub.size(); ++i) {
      auto j = parent.find(sub.site(i));
      REQUIRE(j.has_value());
      vs[static_cast<std::size_t>(i)] = vp[static_cast<std::size_t>(*j)];
    }
    const double ep = dense_lowest(assemble_hamiltonian(parent, vp));
    const double es = dense_lowest(assemble_hamiltonian(sub, vs));
    CHECK(es >= ep - 1e-10);
  }
}

TEST_CASE("grid refinement converges at second order") {
  const double L = 4.0;
  double previous_error = -1.0;
  for (double h : {0.5, 0.25, 0.125}) {
    GridSpec g{1, h};
    Domain d = build_domain(g, Box{rvec(0.0), L}, BoundaryCondition::dirichlet());
    std::vector<double> zero(static_cast<std::size_t>(d.size()), 0.0);
    const double e1 = dense_lowest(assemble_hamiltonian(d, zero));
    const double error = std::abs(e1 - std::pow(M_PI / L, 2));
    if (previous_error > 0) {
      CHECK(error < previous_error);
      CHECK(previous_error / error == Catch::Approx(4.0).epsilon(0.15));
    }
    previous_error = error;
  }
}

TEST_CASE("indicator blocks use the strict half-open convention") {
  GridSpec g{1, 1.0};
  Domain d = build_domain(g, Box{rvec(0.0), 4.0}, BoundaryCondition::dirichlet());
  IndicatorBlock at0 = indicator(d, rvec(0.0));
  REQUIRE(at0.size() == 1);
  CHECK(d.position(at0.indices[0])[0] == Catch::Approx(0.0));
  CHECK(indicator(d, rvec(10.0)).empty());

  GridSpec gf{1, 0.25};
  Domain df = build_domain(gf, Box{rvec(0.0), 4.0}, BoundaryCondition::dirichlet());
  IndicatorBlock at1 = indicator(df, rvec(1.0));
  // sites in (0.5, 1.5); the tie sites at exactly 0.5 and 1.5 stay out
  REQUIRE(at1.size() == 3);
  for (int idx : at1.indices) {
    const double p = df.position(idx)[0];
    CHECK(p > 0.5);
    CHECK(p < 1.5);
  }
}

TEST_CASE("Robin faces only touch boundary diagonals") {
  GridSpec g{1, 0.5};
  Domain d = build_domain(g, Box{rvec(0.0), 3.0}, BoundaryCondition::robin(0.8));
  std::vector<double> zero(static_cast<std::size_t>(d.size()), 0.0);
  SparseOperator H = assemble_hamiltonian(d, zero);
  Eigen::MatrixXd dense(H.matrix);
  const int n = d.size();
  const double inv_h2 = 4.0;
  // interior diagonal = degree/h^2 with full degree
  for (int i = 1; i + 1 < n; ++i) CHECK(dense(i, i) == Catch::Approx(2.0 * inv_h2));
  // boundary diagonal = 1/h^2 + sigma/h
  CHECK(dense(0, 0) == Catch::Approx(inv_h2 + 0.8 / 0.5));
  CHECK(dense(n - 1, n - 1) == Catch::Approx(inv_h2 + 0.8 / 0.5));
  // Neumann keeps the constant vector at zero energy
  Domain dn = build_domain(g, Box{rvec(0.0), 3.0}, BoundaryCondition::neumann());
  SparseOperator HN = assemble_hamiltonian(dn, zero);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  CHECK((HN.matrix * ones).norm() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("lowest_eigenpairs dense and iterative paths agree") {
  GridSpec g{2, 1.0};
  Domain d = build_domain(g, Box{rvec(0.0, 0.0), 11.0}, BoundaryCondition::dirichlet());
  REQUIRE(d.size() == 100);
  std::vector<double> zero(100, 0.0);
  SparseOperator H = assemble_hamiltonian(d, zero);
  EigenSolveResult dense = lowest_eigenpairs(H, 3);
  EigenSolveResult sparse = lowest_eigenpairs(H, 3, /*dense_threshold=*/10);
  const double analytic = 2.0 * (2.0 - 2.0 * std::cos(M_PI / 11.0));
  CHECK(dense.values[0] == Catch::Approx(analytic).margin(1e-9));
  for (int i = 0; i < 3; ++i)
    CHECK(sparse.values[static_cast<std::size_t>(i)] ==
          Catch::Approx(dense.values[static_cast<std::size_t>(i)]).margin(1e-9));
}

TEST_CASE("diagonal operators have their diagonal as spectrum") {
  GridSpec g{1, 1.0};
  Domain d = build_domain(g, Box{rvec(0.0), 6.0}, BoundaryCondition::dirichlet());
  // huge diagonal spread makes hopping negligible only if we zero it; build
  // the pure multiplication operator by masking to isolated sites instead
  std::vector<IVec> isolated = {ivec(1), ivec(3), ivec(5)};
  Domain mask = build_domain(g, MaskGeom{isolated, rvec(-10.0)},
                             BoundaryCondition::dirichlet());
  std::vector<double> v = {0.3, -1.5, 2.0};
  SparseOperator H = assemble_hamiltonian(mask, v);
  EigenSolveResult res = lowest_eigenpairs(H, 3);
  std::vector<double> expect = {2.0 + -1.5, 2.0 + 0.3, 2.0 + 2.0};
  for (int i = 0; i < 3; ++i)
    CHECK(res.values[static_cast<std::size_t>(i)] ==
          Catch::Approx(expect[static_cast<std::size_t>(i)]).margin(1e-12));
}
