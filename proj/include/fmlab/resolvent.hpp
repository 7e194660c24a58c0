#pragma once

// Complex shifted solves: resolvent blocks chi_x (H - E - i eps)^{-1} chi_y
// in operator and Hilbert-Schmidt norm, the iterated resolvent identity
// check, the interface (Simon-Lieb) factorization and decay-rate fits for
// energies below the spectrum.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/SVD>
#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "fmlab/core.hpp"
#include "fmlab/disorder.hpp"
#include "fmlab/eigensolve.hpp"
#include "fmlab/fit.hpp"
#include "fmlab/lattice.hpp"
#include "fmlab/norms.hpp"

namespace fmlab {

using Complex = std::complex<double>;
using SparseC = Eigen::SparseMatrix<Complex>;

struct ResolventQuery {
  double energy = 0.0;
  double epsilon = 1e-6;

  void validate() const {
    if (!(epsilon > 0.0))
      throw ValidationError("ResolventQuery: epsilon must be strictly positive");
    if (!std::isfinite(energy))
      throw ValidationError("ResolventQuery: energy must be finite");
  }
  Complex shift() const { return Complex(energy, epsilon); }
};

struct BlockNormResult {
  double op_norm = 0.0;    // largest singular value
  double hs_norm = 0.0;    // Frobenius norm
  double residual = 0.0;   // max relative solve residual over columns
  int rows = 0;
  int cols = 0;
};

// One LU factorization of (H - E - i eps); reused across all right-hand
// sides on the same operator. Immutable after construction.
class ShiftedFactorization {
 public:
  ShiftedFactorization(const SparseOperator& op, const ResolventQuery& q,
                       double residual_tol = 1e-10)
      : n_(op.n), query_(q), residual_tol_(residual_tol) {
    q.validate();
    matrix_ = op.matrix.cast<Complex>();
    for (int i = 0; i < n_; ++i) matrix_.coeffRef(i, i) -= q.shift();
    matrix_.makeCompressed();
    lu_ = std::make_unique<Eigen::SparseLU<SparseC>>();
    lu_->compute(matrix_);
    if (lu_->info() != Eigen::Success)
      throw NumericError("ShiftedFactorization: LU factorization failed");
    scale_ = 0.0;
    for (int k = 0; k < matrix_.outerSize(); ++k)
      for (SparseC::InnerIterator it(matrix_, k); it; ++it)
        scale_ = std::max(scale_, std::abs(it.value()));
  }

  int size() const { return n_; }
  const ResolventQuery& query() const { return query_; }

  // solves (H - z) u = rhs; throws if the relative residual exceeds the
  // tolerance (an unconverged value is never returned silently)
  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs, double* residual = nullptr) const {
    Eigen::VectorXcd u = lu_->solve(rhs);
    if (lu_->info() != Eigen::Success)
      throw NumericError("ShiftedFactorization: solve failed");
    const double r = (matrix_ * u - rhs).norm() /
                     (scale_ * u.norm() + rhs.norm());
    if (residual) *residual = r;
    if (r > residual_tol_)
      throw NumericError("ShiftedFactorization: solve residual " +
                         std::to_string(r) + " above tolerance " +
                         std::to_string(residual_tol_));
    return u;
  }

  // columns of the resolvent on an index set
  Eigen::MatrixXcd columns(std::span<const int> idx, double* residual = nullptr) const {
    Eigen::MatrixXcd out(n_, static_cast<int>(idx.size()));
    double worst = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      Eigen::VectorXcd e = Eigen::VectorXcd::Zero(n_);
      e[idx[j]] = Complex(1.0, 0.0);
      double r = 0.0;
      out.col(static_cast<int>(j)) = solve(e, &r);
      worst = std::max(worst, r);
    }
    if (residual) *residual = worst;
    return out;
  }

 private:
  int n_;
  ResolventQuery query_;
  double residual_tol_;
  SparseC matrix_;
  std::unique_ptr<Eigen::SparseLU<SparseC>> lu_;
  double scale_ = 0.0;
};

// Extracts the block chi_x R chi_y from solved columns.
inline BlockNormResult block_norms(const Eigen::MatrixXcd& columns,
                                   std::span<const int> x_idx,
                                   double residual) {
  BlockNormResult res;
  res.rows = static_cast<int>(x_idx.size());
  res.cols = static_cast<int>(columns.cols());
  res.residual = residual;
  if (res.rows == 0 || res.cols == 0) return res;
  Eigen::MatrixXcd block(res.rows, res.cols);
  for (int i = 0; i < res.rows; ++i) block.row(i) = columns.row(x_idx[i]);
  res.hs_norm = block.norm();
  res.op_norm = block_op_norm(block);
  return res;
}

inline BlockNormResult resolvent_block(const ShiftedFactorization& fact,
                                       std::span<const int> x_idx,
                                       std::span<const int> y_idx) {
  if (x_idx.empty() || y_idx.empty()) {
    BlockNormResult res;
    res.rows = static_cast<int>(x_idx.size());
    res.cols = static_cast<int>(y_idx.size());
    return res;  // the block vanishes by convention
  }
  double residual = 0.0;
  Eigen::MatrixXcd cols = fact.columns(y_idx, &residual);
  return block_norms(cols, x_idx, residual);
}

inline BlockNormResult resolvent_block(const SparseOperator& op, double energy,
                                       double epsilon, const IndicatorBlock& x,
                                       const IndicatorBlock& y) {
  if (x.empty() || y.empty()) {
    BlockNormResult res;
    res.rows = x.size();
    res.cols = y.size();
    return res;
  }
  ShiftedFactorization fact(op, {energy, epsilon});
  return resolvent_block(fact, x.indices, y.indices);
}

// ---------------------------------------------------------------------------
// Iterated resolvent identity R = R_F + R_F W R_F + R_F W R W R_F on the
// block (x, y). W must satisfy diag(H) + W == diag(H_F) exactly; the helper
// add_diagonal below builds such pairs.

inline SparseOperator add_diagonal(const SparseOperator& op,
                                   std::span<const double> w) {
  if (static_cast<int>(w.size()) != op.n)
    throw ValidationError("add_diagonal: length mismatch");
  SparseOperator out = op;
  for (int i = 0; i < op.n; ++i) out.matrix.coeffRef(i, i) += w[i];
  out.matrix.makeCompressed();
  ByteHasher h;
  h.add_pod(op.potential_checksum);
  for (double v : w) h.add_pod(v);
  out.potential_checksum = h.digest();
  return out;
}

// max relative deviation between the two sides of the identity
inline double check_resolvent_identity(const SparseOperator& H,
                                       const SparseOperator& H_F,
                                       std::span<const double> w,
                                       double energy, double epsilon,
                                       const IndicatorBlock& x,
                                       const IndicatorBlock& y) {
  if (H.n != H_F.n || static_cast<int>(w.size()) != H.n)
    throw ValidationError("check_resolvent_identity: dimension mismatch");
  for (int i = 0; i < H.n; ++i) {
    const double lhs = H.matrix.coeff(i, i) + w[i];
    const double rhs = H_F.matrix.coeff(i, i);
    if (lhs != rhs)
      throw ValidationError(
          "check_resolvent_identity: decomposition H = H_F - W violated at site " +
          std::to_string(i));
  }
  if (x.empty() || y.empty()) return 0.0;

  ShiftedFactorization R(H, {energy, epsilon});
  ShiftedFactorization RF(H_F, {energy, epsilon});

  const int n = H.n;
  Eigen::VectorXcd wc(n);
  for (int i = 0; i < n; ++i) wc[i] = Complex(w[i], 0.0);

  // lhs block
  Eigen::MatrixXcd lhs_cols = R.columns(y.indices);
  Eigen::MatrixXcd lhs(x.size(), y.size());
  for (int i = 0; i < x.size(); ++i) lhs.row(i) = lhs_cols.row(x.indices[i]);

  // R_F columns on both blocks; the operators are complex symmetric, so
  // rows of R_F are transposed columns
  Eigen::MatrixXcd rf_y = RF.columns(y.indices);
  Eigen::MatrixXcd rf_x = RF.columns(x.indices);

  Eigen::MatrixXcd term1(x.size(), y.size());
  for (int i = 0; i < x.size(); ++i) term1.row(i) = rf_y.row(x.indices[i]);

  Eigen::MatrixXcd w_rf_y = wc.asDiagonal() * rf_y;
  Eigen::MatrixXcd term2 = rf_x.transpose() * w_rf_y;

  Eigen::MatrixXcd r_w_rf_y(n, y.size());
  for (int j = 0; j < y.size(); ++j)
    r_w_rf_y.col(j) = R.solve(w_rf_y.col(j));
  Eigen::MatrixXcd term3 = rf_x.transpose() * (wc.asDiagonal() * r_w_rf_y);

  const Eigen::MatrixXcd rhs = term1 + term2 + term3;
  const double scale = std::max(lhs.norm(), 1e-300);
  return (lhs - rhs).norm() / scale;
}

// ---------------------------------------------------------------------------
// Interface factorization check. For |x-y| large the long block factors
// through the inner box B_L, the interface shells and the exterior region
// C_L; the smallest admissible constant over the realizations is reported.

struct SliGeometry {
  double L = 0.0;     // inner box sidelength
  double R_U = 0.0;   // single-site support diameter
};

struct SliResult {
  std::vector<double> ratios;   // per realization: lhs / (f1*f2*f3)
  double max_ratio = 0.0;       // smallest admissible constant C
  int violations = 0;           // non-finite ratios
  double lhs_mean = 0.0;
};

inline SliResult check_sli(const AlloyModel& model, const Domain& domain,
                           const SliGeometry& geom, const RVec& x,
                           const RVec& y, double energy, double epsilon,
                           int realizations, std::uint64_t seed) {
  const int d = domain.grid().dimension;
  const double sep = max_norm(sub(x, y), d);
  if (!(sep > 2.0 * geom.R_U + geom.L + 2.0))
    throw ValidationError("check_sli: |x-y| must exceed 2 R_U + L + 2");

  // geometry: inner box, its boundary layer, exterior region, outer layer
  Domain b_l = restrict_domain(domain, Box{x, geom.L});
  Domain c_l = restrict_domain(
      domain, BoxComplement{x, 2.0 * geom.R_U + geom.L, true});

  const auto chi_minus_g = shell_sites(domain, x, geom.L - 2.0, geom.L);
  const auto chi_plus_g =
      shell_sites(domain, x, 2.0 * geom.R_U + geom.L,
                  2.0 * geom.R_U + geom.L + 2.0, /*exclude_inner_closure=*/true);
  if (chi_minus_g.empty() || chi_plus_g.empty())
    throw ValidationError("check_sli: degenerate interface layers");

  // the same physical sites indexed in the sub-domains
  auto map_to = [&](const Domain& sub, const std::vector<int>& global) {
    std::vector<int> local;
    for (int g : global)
      if (auto j = sub.find(domain.site(g))) local.push_back(*j);
    return local;
  };
  const auto chi_minus_b = map_to(b_l, chi_minus_g);
  const auto chi_plus_c = map_to(c_l, chi_plus_g);

  const IndicatorBlock x_g = indicator(domain, x);
  const IndicatorBlock y_g = indicator(domain, y);
  const IndicatorBlock x_b = indicator(b_l, x);
  const IndicatorBlock y_c = indicator(c_l, y);
  if (x_g.empty() || y_g.empty())
    throw ValidationError("check_sli: empty endpoint blocks");

  SliResult out;
  out.ratios.resize(static_cast<std::size_t>(realizations));
  double lhs_sum = 0.0;
  for (int r = 0; r < realizations; ++r) {
    DisorderRealization omega = model.sample(seed, static_cast<std::uint64_t>(r));
    const auto v_g = potential_field(omega, model.impurities, model.profile,
                                     model.background_on(domain), domain);
    const auto v_b = potential_field(omega, model.impurities, model.profile,
                                     model.background_on(b_l), b_l);
    const auto v_c = potential_field(omega, model.impurities, model.profile,
                                     model.background_on(c_l), c_l);
    ShiftedFactorization R_g(assemble_hamiltonian(domain, v_g), {energy, epsilon});
    ShiftedFactorization R_b(assemble_hamiltonian(b_l, v_b), {energy, epsilon});
    ShiftedFactorization R_c(assemble_hamiltonian(c_l, v_c), {energy, epsilon});

    const double lhs = resolvent_block(R_g, x_g.indices, y_g.indices).op_norm;
    const double f1 = resolvent_block(R_b, x_b.indices, chi_minus_b).op_norm;
    const double f2 = resolvent_block(R_g, chi_minus_g, chi_plus_g).op_norm;
    const double f3 = resolvent_block(R_c, chi_plus_c, y_c.indices).op_norm;

    const double denom = f1 * f2 * f3;
    const double ratio = lhs / denom;
    out.ratios[static_cast<std::size_t>(r)] = ratio;
    if (!std::isfinite(ratio)) ++out.violations;
    lhs_sum += lhs;
  }
  out.lhs_mean = lhs_sum / std::max(realizations, 1);
  out.max_ratio = 0.0;
  for (double v : out.ratios)
    if (std::isfinite(v)) out.max_ratio = std::max(out.max_ratio, v);
  if (out.violations > 0)
    throw InvariantViolation("check_sli: non-finite factorization ratio");
  return out;
}

// ---------------------------------------------------------------------------
// Decay-rate fit of || chi_x R chi_{x + r e_1} || for E below the spectrum.

struct CombesThomasModel {
  DecayModel fit;
  double spectral_bottom = 0.0;
  double gap = 0.0;
  std::vector<double> separations;
  std::vector<double> op_norms;
  std::vector<double> hs_norms;
  std::vector<double> residuals;
};

inline CombesThomasModel combes_thomas_fit(const SparseOperator& op,
                                           const Domain& domain, double energy,
                                           double epsilon, const RVec& center,
                                           std::span<const double> separations) {
  if (separations.size() < 4)
    throw ValidationError("combes_thomas_fit: need at least 4 separations");
  const double e1 = lowest_eigenpairs(op, 1).values[0];
  if (!(energy < e1))
    throw NumericError("combes_thomas_fit: E = " + std::to_string(energy) +
                       " is not strictly below the spectral bottom " +
                       std::to_string(e1));
  CombesThomasModel model;
  model.spectral_bottom = e1;
  model.gap = e1 - energy;

  ShiftedFactorization fact(op, {energy, epsilon});
  const IndicatorBlock x = indicator(domain, center);
  if (x.empty()) throw ValidationError("combes_thomas_fit: empty center block");
  for (double r : separations) {
    RVec target = center;
    target[0] += r;
    const IndicatorBlock y = indicator(domain, target);
    const BlockNormResult b = resolvent_block(fact, x.indices, y.indices);
    model.separations.push_back(r);
    model.op_norms.push_back(b.op_norm);
    model.hs_norms.push_back(b.hs_norm);
    model.residuals.push_back(b.residual);
  }
  model.fit = fit_exponential_decay(model.separations, model.op_norms, 0.0, 4);
  return model;
}

}  // namespace fmlab
