#pragma once

// Grids, finite domains (boxes, strips, masks), boundary conditions and
// finite-difference assembly of H = -Laplacian + V with Dirichlet (or
// constant-coefficient Robin) realization.

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "fmlab/core.hpp"

namespace fmlab {

// Geometric comparisons on grid coordinates tolerate this much absolute
// slack; distances exactly on a cube face count as outside (open cubes).
inline constexpr double kGeomTol = 1e-9;

struct GridSpec {
  int dimension = 1;
  double spacing = 1.0;

  void validate() const {
    if (dimension < 1 || dimension > 3)
      throw ValidationError("GridSpec: dimension must be 1, 2 or 3");
    if (!(spacing > 0.0) || !std::isfinite(spacing))
      throw ValidationError("GridSpec: spacing must be positive and finite");
  }
};

enum class BoundaryKind { Dirichlet, Robin };

struct BoundaryCondition {
  BoundaryKind kind = BoundaryKind::Dirichlet;
  double sigma = 0.0;  // Robin coefficient per face; 0 gives Neumann

  static BoundaryCondition dirichlet() { return {BoundaryKind::Dirichlet, 0.0}; }
  static BoundaryCondition robin(double sigma) {
    return {BoundaryKind::Robin, sigma};
  }
  static BoundaryCondition neumann() { return robin(0.0); }
  std::string tag() const {
    if (kind == BoundaryKind::Dirichlet) return "dirichlet";
    std::ostringstream os;
    os << "robin(" << sigma << ")";
    return os.str();
  }
};

// Open cube of sidelength `side` centered at `center`.
struct Box {
  RVec center{};
  double side = 0.0;
};

// Strip: open cube of sidelength `side` in the first d1 coordinates
// (d1 = center1.size()) crossed with an open cube of width
// `transverse_width` centered at 0 in the remaining coordinates.
struct StripGeom {
  std::vector<double> center1;
  double side = 0.0;
  double transverse_width = 0.0;
};

// Explicit integer site list relative to a physical origin.
struct MaskGeom {
  std::vector<IVec> sites;
  RVec origin{};
};

// Everything outside the (closed or open) cube; restriction-only region.
struct BoxComplement {
  RVec center{};
  double side = 0.0;
  bool remove_closure = true;
};

using Geometry = std::variant<Box, StripGeom, MaskGeom>;
using Region = std::variant<Box, StripGeom, MaskGeom, BoxComplement>;

inline bool region_contains(const Region& region, const RVec& p, int d) {
  return std::visit(
      [&](const auto& g) -> bool {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Box>) {
          for (int k = 0; k < d; ++k)
            if (std::abs(p[k] - g.center[k]) >= 0.5 * g.side - kGeomTol)
              return false;
          return true;
        } else if constexpr (std::is_same_v<T, StripGeom>) {
          const int d1 = static_cast<int>(g.center1.size());
          for (int k = 0; k < d1; ++k)
            if (std::abs(p[k] - g.center1[k]) >= 0.5 * g.side - kGeomTol)
              return false;
          for (int k = d1; k < d; ++k)
            if (std::abs(p[k]) >= 0.5 * g.transverse_width - kGeomTol)
              return false;
          return true;
        } else if constexpr (std::is_same_v<T, BoxComplement>) {
          double dist = 0.0;
          for (int k = 0; k < d; ++k)
            dist = std::max(dist, std::abs(p[k] - g.center[k]));
          return g.remove_closure ? (dist > 0.5 * g.side + kGeomTol)
                                  : (dist > 0.5 * g.side - kGeomTol);
        } else {
          // MaskGeom has no pointwise predicate; handled by site filtering.
          return false;
        }
      },
      region);
}

namespace detail {
struct IVecHash {
  std::size_t operator()(const IVec& v) const {
    std::uint64_t h = mix64(static_cast<std::uint64_t>(v[0]) + 0x9e37);
    h = mix64(h ^ static_cast<std::uint64_t>(v[1]));
    h = mix64(h ^ static_cast<std::uint64_t>(v[2]));
    return static_cast<std::size_t>(h);
  }
};
}  // namespace detail

class Domain {
 public:
  Domain(GridSpec grid, RVec origin, std::vector<IVec> sites,
         std::string geometry_tag, BoundaryCondition bc)
      : grid_(grid),
        origin_(origin),
        sites_(std::move(sites)),
        geometry_tag_(std::move(geometry_tag)),
        bc_(bc) {
    grid_.validate();
    if (sites_.empty())
      throw EmptyDomainError("Domain: empty site list (" + geometry_tag_ + ")");
    std::sort(sites_.begin(), sites_.end());
    for (std::size_t i = 1; i < sites_.size(); ++i)
      if (sites_[i] == sites_[i - 1])
        throw ValidationError("Domain: duplicate site in " + geometry_tag_);
    index_.reserve(sites_.size() * 2);
    for (std::size_t i = 0; i < sites_.size(); ++i)
      index_.emplace(sites_[i], static_cast<int>(i));
  }

  const GridSpec& grid() const { return grid_; }
  const RVec& origin() const { return origin_; }
  const BoundaryCondition& boundary() const { return bc_; }
  const std::string& geometry_tag() const { return geometry_tag_; }
  int size() const { return static_cast<int>(sites_.size()); }
  const std::vector<IVec>& sites() const { return sites_; }
  const IVec& site(int i) const { return sites_[static_cast<std::size_t>(i)]; }

  RVec position(int i) const {
    const IVec& s = sites_[static_cast<std::size_t>(i)];
    RVec p = origin_;
    for (int k = 0; k < grid_.dimension; ++k)
      p[k] += grid_.spacing * static_cast<double>(s[k]);
    return p;
  }

  std::optional<int> find(const IVec& s) const {
    auto it = index_.find(s);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Axis-aligned physical bounding box of the sites.
  void bounding_box(RVec& lo, RVec& hi) const {
    lo = hi = position(0);
    for (int i = 1; i < size(); ++i) {
      RVec p = position(i);
      for (int k = 0; k < grid_.dimension; ++k) {
        lo[k] = std::min(lo[k], p[k]);
        hi[k] = std::max(hi[k], p[k]);
      }
    }
  }

  std::uint64_t checksum() const {
    ByteHasher h;
    h.add_pod(grid_.dimension);
    h.add_pod(grid_.spacing);
    h.add_pod(origin_);
    h.add_string(bc_.tag());
    for (const auto& s : sites_) h.add_pod(s);
    return h.digest();
  }

 private:
  GridSpec grid_;
  RVec origin_;
  std::vector<IVec> sites_;
  std::string geometry_tag_;
  BoundaryCondition bc_;
  std::unordered_map<IVec, int, detail::IVecHash> index_;
};

namespace detail {

// Interior nodes of the open interval (corner, corner + extent) on a grid
// anchored at `corner`: corner + k h for k = 1 .. ceil(extent/h) - 1.
inline std::int64_t interior_count(double extent, double h) {
  if (!(extent > 0)) return 0;
  auto k = static_cast<std::int64_t>(std::floor(extent / h - kGeomTol));
  // k h < extent  and  (k+1) h >= extent
  while ((k + 1) * h < extent - kGeomTol) ++k;
  while (k >= 1 && k * h >= extent - kGeomTol) --k;
  return k;  // nodes k = 1..k
}

inline std::vector<IVec> enumerate_product(const std::array<std::int64_t, 3>& n,
                                           int d) {
  std::vector<IVec> out;
  std::int64_t total = 1;
  for (int k = 0; k < d; ++k) total *= n[k];
  if (total <= 0) return out;
  out.reserve(static_cast<std::size_t>(total));
  IVec idx = {1, 1, 1};
  for (std::int64_t a = 1; a <= n[0]; ++a) {
    idx[0] = a;
    if (d == 1) {
      out.push_back({a, 0, 0});
      continue;
    }
    for (std::int64_t b = 1; b <= n[1]; ++b) {
      idx[1] = b;
      if (d == 2) {
        out.push_back({a, b, 0});
        continue;
      }
      for (std::int64_t c = 1; c <= n[2]; ++c) out.push_back({a, b, c});
    }
  }
  return out;
}

inline std::string geometry_tag(const Geometry& geom) {
  return std::visit(
      [](const auto& g) -> std::string {
        using T = std::decay_t<decltype(g)>;
        std::ostringstream os;
        if constexpr (std::is_same_v<T, Box>) {
          os << "box(center=(" << g.center[0] << "," << g.center[1] << ","
             << g.center[2] << "),side=" << g.side << ")";
        } else if constexpr (std::is_same_v<T, StripGeom>) {
          os << "strip(d1=" << g.center1.size() << ",side=" << g.side
             << ",width=" << g.transverse_width << ")";
        } else {
          os << "mask(" << g.sites.size() << " sites)";
        }
        return os.str();
      },
      geom);
}

}  // namespace detail

// Builds a Domain. Boxes and strips anchor the grid at the lower corner of
// the region, so the sites are the classic interior nodes of the Dirichlet
// discretization; masks give sites explicitly.
inline Domain build_domain(const GridSpec& grid, const Geometry& geom,
                           BoundaryCondition bc) {
  grid.validate();
  const int d = grid.dimension;
  const double h = grid.spacing;
  const std::string tag = detail::geometry_tag(geom);

  if (const auto* box = std::get_if<Box>(&geom)) {
    if (!(box->side > 0)) throw ValidationError("build_domain: side must be > 0");
    RVec corner{};
    std::array<std::int64_t, 3> counts = {1, 1, 1};
    for (int k = 0; k < d; ++k) {
      corner[k] = box->center[k] - 0.5 * box->side;
      counts[k] = detail::interior_count(box->side, h);
    }
    auto sites = detail::enumerate_product(counts, d);
    if (sites.empty())
      throw EmptyDomainError("build_domain: no interior sites in " + tag);
    return Domain(grid, corner, std::move(sites), tag, bc);
  }
  if (const auto* strip = std::get_if<StripGeom>(&geom)) {
    const int d1 = static_cast<int>(strip->center1.size());
    if (d1 < 1 || d1 >= d)
      throw ValidationError("build_domain: strip requires 1 <= d1 < d");
    if (!(strip->side > 0) || !(strip->transverse_width > 0))
      throw ValidationError("build_domain: strip extents must be > 0");
    RVec corner{};
    std::array<std::int64_t, 3> counts = {1, 1, 1};
    for (int k = 0; k < d1; ++k) {
      corner[k] = strip->center1[static_cast<std::size_t>(k)] - 0.5 * strip->side;
      counts[k] = detail::interior_count(strip->side, h);
    }
    for (int k = d1; k < d; ++k) {
      corner[k] = -0.5 * strip->transverse_width;
      counts[k] = detail::interior_count(strip->transverse_width, h);
    }
    auto sites = detail::enumerate_product(counts, d);
    if (sites.empty())
      throw EmptyDomainError("build_domain: no interior sites in " + tag);
    return Domain(grid, corner, std::move(sites), tag, bc);
  }
  const auto& mask = std::get<MaskGeom>(geom);
  if (mask.sites.empty())
    throw EmptyDomainError("build_domain: empty mask");
  return Domain(grid, mask.origin, mask.sites, tag, bc);
}

// Keeps the parent sites lying inside `region`; preserves grid, origin and
// boundary condition, so the result is a genuine sub-domain.
inline Domain restrict_domain(const Domain& parent, const Region& region) {
  std::vector<IVec> kept;
  const int d = parent.grid().dimension;
  if (const auto* mask = std::get_if<MaskGeom>(&region)) {
    for (const auto& s : mask->sites)
      if (parent.find(s)) kept.push_back(s);
  } else {
    for (int i = 0; i < parent.size(); ++i)
      if (region_contains(region, parent.position(i), d))
        kept.push_back(parent.site(i));
  }
  if (kept.empty())
    throw EmptyDomainError("restrict_domain: empty intersection");
  return Domain(parent.grid(), parent.origin(), std::move(kept),
                parent.geometry_tag() + "|restricted", parent.boundary());
}

// Real symmetric sparse operator on a Domain with provenance metadata.
struct SparseOperator {
  int n = 0;
  Eigen::SparseMatrix<double> matrix;
  std::uint64_t domain_checksum = 0;
  std::uint64_t potential_checksum = 0;

  std::uint64_t checksum() const {
    ByteHasher h;
    h.add_pod(n);
    h.add_pod(domain_checksum);
    h.add_pod(potential_checksum);
    return h.digest();
  }
};

// Assembles H = -Laplacian + V. The pure Laplacian has diagonal 2d/h^2 and
// -1/h^2 on nearest-neighbor couplings inside the domain; Dirichlet drops
// exterior couplings, Robin turns each missing face into deg/h^2 bookkeeping
// plus sigma/h on the diagonal.
inline SparseOperator assemble_hamiltonian(const Domain& domain,
                                           std::span<const double> potential) {
  const int n = domain.size();
  if (static_cast<int>(potential.size()) != n)
    throw ValidationError("assemble_hamiltonian: potential length " +
                          std::to_string(potential.size()) +
                          " != site count " + std::to_string(n));
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(potential[i]))
      throw ValidationError("assemble_hamiltonian: non-finite potential at site " +
                            std::to_string(i));

  const int d = domain.grid().dimension;
  const double h = domain.grid().spacing;
  const double inv_h2 = 1.0 / (h * h);
  const bool robin = domain.boundary().kind == BoundaryKind::Robin;
  const double sigma = domain.boundary().sigma;

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * (2 * d + 1));
  for (int i = 0; i < n; ++i) {
    int degree = 0;
    IVec s = domain.site(i);
    for (int k = 0; k < d; ++k) {
      for (int dir = -1; dir <= 1; dir += 2) {
        IVec nb = s;
        nb[k] += dir;
        if (auto j = domain.find(nb)) {
          ++degree;
          triplets.emplace_back(i, *j, -inv_h2);
        }
      }
    }
    double diag;
    if (robin) {
      const int missing = 2 * d - degree;
      diag = degree * inv_h2 + missing * sigma / h;
    } else {
      diag = 2.0 * d * inv_h2;
    }
    triplets.emplace_back(i, i, diag + potential[i]);
  }

  SparseOperator op;
  op.n = n;
  op.matrix.resize(n, n);
  op.matrix.setFromTriplets(triplets.begin(), triplets.end());
  op.matrix.makeCompressed();
  op.domain_checksum = domain.checksum();
  ByteHasher ph;
  for (double v : potential) ph.add_pod(v);
  op.potential_checksum = ph.digest();
  return op;
}

// Index set of the sites inside the open unit cube centered at x. Empty
// blocks are valid (cube misses the domain); sites exactly on the cube face
// are excluded.
struct IndicatorBlock {
  RVec center{};
  std::vector<int> indices;

  bool empty() const { return indices.empty(); }
  int size() const { return static_cast<int>(indices.size()); }
};

inline IndicatorBlock indicator(const Domain& domain, const RVec& x) {
  IndicatorBlock block;
  block.center = x;
  const int d = domain.grid().dimension;
  for (int i = 0; i < domain.size(); ++i) {
    const double dist = max_norm(sub(domain.position(i), x), d);
    if (dist < 0.5 - kGeomTol) block.indices.push_back(i);
  }
  return block;
}

// Sites in the max-norm annulus between the cubes of sidelength `inner` and
// `outer` around x. With exclude_inner_closure = false the inner face is
// kept (set difference of open cubes); with true the closed inner cube is
// removed (strict inequality).
inline std::vector<int> shell_sites(const Domain& domain, const RVec& x,
                                    double inner, double outer,
                                    bool exclude_inner_closure = false) {
  std::vector<int> out;
  const int d = domain.grid().dimension;
  for (int i = 0; i < domain.size(); ++i) {
    const double dist = max_norm(sub(domain.position(i), x), d);
    const bool above = exclude_inner_closure ? (dist > 0.5 * inner + kGeomTol)
                                             : (dist >= 0.5 * inner - kGeomTol);
    if (above && dist < 0.5 * outer - kGeomTol) out.push_back(i);
  }
  return out;
}

}  // namespace fmlab
