#pragma once

// Composite Hilbert space: fermion Fock space (two spinor modes per site) tensored
// with one truncated boson ladder per lattice link.
//
// Ordering convention, fixed for the whole library:
//   fermion mode  j = 2 * site + spinor              (site-major, spinor-minor)
//   fermion index   = sum_j n_j 2^(M-1-j)            (mode 0 is the most significant bit)
//   boson index     = sum_l k_l n_max^(L-1-l)        (link 0 is the most significant digit)
//   composite index = fermion index * n_max^L + boson index
// so a full-space operator is (fermion factor) kron (boson factor). Fermion
// operators carry a Jordan-Wigner parity string over all modes with smaller index.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "gaugework/linalg.hpp"
#include "gaugework/types.hpp"

namespace gaugework {

/// Physical and discretization parameters. Lattice spacing is 1.
struct LatticeConfig {
  int num_sites = 2;
  int dimension = 1;  // 1: periodic chain; 2: periodic rectangle
  int width = 0;      // 2D only: sites along x (0 chooses the most square shape)
  int n_max = 2;      // boson levels 0..n_max-1 per link
  double mass = 0.0;
  double charge = 1.0;
  double beta = 1.0;
  std::size_t dim_cap = std::size_t{1} << 20;
  std::size_t dense_cap = 4096;  // largest dimension for dense-matrix stages
};

struct BasisState {
  std::vector<int> occupations;  // per fermion mode, 0 or 1
  std::vector<int> levels;       // per link, 0..n_max-1

  bool operator==(const BasisState&) const = default;
};

class SpaceDescriptor {
 public:
  int num_sites = 0;
  int dimension = 1;
  int extent_x = 0;
  int extent_y = 1;
  int n_max = 0;
  int fermion_modes = 0;
  int links = 0;
  int plaquettes = 0;
  Index fermion_dim = 0;
  Index boson_dim = 0;
  Index total_dim = 0;
  std::size_t dense_cap = 0;

  int mode(int site, int spinor) const { return 2 * site + spinor; }

  /// Site reached from `site` by one step along `direction` (0 = x, 1 = y), periodic.
  int neighbor(int site, int direction, int step = 1) const {
    const int x = site % extent_x;
    const int y = site / extent_x;
    if (direction == 0) return (x + step + extent_x) % extent_x + extent_x * y;
    return x + extent_x * ((y + step + extent_y) % extent_y);
  }

  /// Link from `site` to neighbor(site, direction).
  int link(int site, int direction) const { return dimension == 1 ? site : 2 * site + direction; }
  int link_tail(int l) const { return dimension == 1 ? l : l / 2; }
  int link_direction(int l) const { return dimension == 1 ? 0 : l % 2; }
  int link_head(int l) const { return neighbor(link_tail(l), link_direction(l)); }

  /// Oriented boundary of the plaquette whose lower-left corner is site p:
  /// x(p) + y(p + x) - x(p + y) - y(p).
  std::array<std::pair<int, int>, 4> plaquette(int p) const {
    return {{{link(p, 0), +1},
             {link(neighbor(p, 0), 1), +1},
             {link(neighbor(p, 1), 0), -1},
             {link(p, 1), -1}}};
  }

  Index encode(const BasisState& s) const {
    if (static_cast<int>(s.occupations.size()) != fermion_modes ||
        static_cast<int>(s.levels.size()) != links) {
      throw std::invalid_argument("encode: state shape does not match the space");
    }
    Index f = 0;
    for (int n : s.occupations) {
      if (n != 0 && n != 1) throw std::invalid_argument("encode: occupation must be 0 or 1");
      f = 2 * f + n;
    }
    Index b = 0;
    for (int k : s.levels) {
      if (k < 0 || k >= n_max) throw std::invalid_argument("encode: boson level out of range");
      b = n_max * b + k;
    }
    return f * boson_dim + b;
  }

  BasisState decode(Index index) const {
    if (index < 0 || index >= total_dim) throw std::out_of_range("decode: index out of range");
    BasisState s;
    s.occupations.resize(static_cast<std::size_t>(fermion_modes));
    s.levels.resize(static_cast<std::size_t>(links));
    Index f = index / boson_dim;
    Index b = index % boson_dim;
    for (int j = fermion_modes - 1; j >= 0; --j) {
      s.occupations[static_cast<std::size_t>(j)] = static_cast<int>(f % 2);
      f /= 2;
    }
    for (int l = links - 1; l >= 0; --l) {
      s.levels[static_cast<std::size_t>(l)] = static_cast<int>(b % n_max);
      b /= n_max;
    }
    return s;
  }

  /// Throws CapExceeded when a stage needing dense total_dim x total_dim matrices would not fit.
  void require_dense(const std::string& stage) const {
    if (static_cast<std::size_t>(total_dim) > dense_cap) {
      throw CapExceeded(stage + " needs dense matrices", static_cast<std::size_t>(total_dim),
                        dense_cap);
    }
  }
};

namespace detail {

inline int default_width(int sites) {
  int best = 1;
  for (int w = 1; w * w <= sites; ++w) {
    if (sites % w == 0) best = w;
  }
  return sites / best;
}

// Checked product for dimension counting; saturates instead of overflowing.
inline std::size_t checked_pow(std::size_t base, int exponent) {
  std::size_t r = 1;
  for (int i = 0; i < exponent; ++i) {
    if (base != 0 && r > (std::size_t{1} << 62) / base) return std::size_t{1} << 62;
    r *= base;
  }
  return r;
}

}  // namespace detail

inline SpaceDescriptor build_space(const LatticeConfig& config) {
  if (config.num_sites < 1) throw std::invalid_argument("num_sites must be positive");
  if (config.dimension != 1 && config.dimension != 2) {
    throw std::invalid_argument("dimension must be 1 or 2");
  }
  if (config.n_max < 1) throw std::invalid_argument("n_max must be positive");
  if (!(config.beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (config.mass < 0.0) throw std::invalid_argument("mass must be non-negative");

  SpaceDescriptor s;
  s.num_sites = config.num_sites;
  s.dimension = config.dimension;
  s.n_max = config.n_max;
  s.dense_cap = config.dense_cap;
  if (config.dimension == 1) {
    s.extent_x = config.num_sites;
    s.extent_y = 1;
    s.links = config.num_sites;
    s.plaquettes = 0;
  } else {
    const int w = config.width > 0 ? config.width : detail::default_width(config.num_sites);
    if (config.num_sites % w != 0 || w < 2 || config.num_sites / w < 2) {
      throw std::invalid_argument("2D lattice needs width >= 2 dividing num_sites with height >= 2");
    }
    s.extent_x = w;
    s.extent_y = config.num_sites / w;
    s.links = 2 * config.num_sites;
    s.plaquettes = config.num_sites;
  }
  s.fermion_modes = 2 * config.num_sites;

  const std::size_t fermion = detail::checked_pow(2, s.fermion_modes);
  const std::size_t boson = detail::checked_pow(static_cast<std::size_t>(config.n_max), s.links);
  const std::size_t total =
      (boson != 0 && fermion > (std::size_t{1} << 62) / boson) ? (std::size_t{1} << 62)
                                                               : fermion * boson;
  if (total > config.dim_cap) throw CapExceeded("Hilbert space", total, config.dim_cap);
  s.fermion_dim = static_cast<Index>(fermion);
  s.boson_dim = static_cast<Index>(boson);
  s.total_dim = static_cast<Index>(total);
  return s;
}

struct FermionMode {
  int index;
};
struct Link {
  int index;
};
using Slot = std::variant<FermionMode, Link>;

namespace local {

/// Fermion annihilator on one mode in the (empty, occupied) basis.
inline DenseMatrix fermion_lowering() {
  DenseMatrix c = DenseMatrix::Zero(2, 2);
  c(0, 1) = 1.0;
  return c;
}

/// Truncated ladder a|k> = sqrt(k)|k-1>.
inline DenseMatrix ladder_lowering(int n_max) {
  DenseMatrix a = DenseMatrix::Zero(n_max, n_max);
  for (int k = 1; k < n_max; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  return a;
}

inline DenseMatrix number(int n_max) {
  DenseMatrix n = DenseMatrix::Zero(n_max, n_max);
  for (int k = 0; k < n_max; ++k) n(k, k) = static_cast<double>(k);
  return n;
}

}  // namespace local

namespace detail {

inline SparseMatrix kron(const SparseMatrix& a, const SparseMatrix& b) {
  SparseMatrix r = Eigen::kroneckerProduct(a, b);
  return r;
}

inline SparseMatrix parity_string(int modes) {
  const Index dim = Index{1} << modes;
  SparseMatrix z(dim, dim);
  z.reserve(Eigen::VectorXi::Constant(dim, 1));
  for (Index i = 0; i < dim; ++i) {
    z.insert(i, i) = (__builtin_popcountll(static_cast<unsigned long long>(i)) % 2 == 0) ? 1.0 : -1.0;
  }
  return z;
}

}  // namespace detail

/// Places a local operator on one slot of the full space. For a fermion mode the
/// off-diagonal (parity-odd) part of `local_op` is dressed with the parity string of
/// all preceding modes; the diagonal part is placed bare. Link operators are plain
/// Kronecker placements.
inline SparseMatrix embed(const SpaceDescriptor& space, const DenseMatrix& local_op, Slot slot) {
  if (const auto* f = std::get_if<FermionMode>(&slot)) {
    const int j = f->index;
    if (j < 0 || j >= space.fermion_modes) throw std::out_of_range("embed: unknown fermion mode");
    if (local_op.rows() != 2 || local_op.cols() != 2) {
      throw std::invalid_argument("embed: fermion-mode operator must be 2x2");
    }
    DenseMatrix even = DenseMatrix::Zero(2, 2);
    even.diagonal() = local_op.diagonal();
    const DenseMatrix odd = local_op - even;
    const SparseMatrix before = sparse_identity(Index{1} << j);
    const SparseMatrix after = sparse_identity(Index{1} << (space.fermion_modes - j - 1));
    SparseMatrix fermion = detail::kron(detail::kron(before, to_sparse(even)), after);
    if (max_abs(odd) > 0.0) {
      fermion += detail::kron(detail::kron(detail::parity_string(j), to_sparse(odd)), after);
    }
    return detail::kron(fermion, sparse_identity(space.boson_dim));
  }
  const int l = std::get<Link>(slot).index;
  if (l < 0 || l >= space.links) throw std::out_of_range("embed: unknown link");
  if (local_op.rows() != space.n_max || local_op.cols() != space.n_max) {
    throw std::invalid_argument("embed: link operator must be n_max x n_max");
  }
  Index before = 1;
  for (int k = 0; k < l; ++k) before *= space.n_max;
  const Index after = space.boson_dim / (before * space.n_max);
  const SparseMatrix boson =
      detail::kron(detail::kron(sparse_identity(before), to_sparse(local_op)), sparse_identity(after));
  return detail::kron(sparse_identity(space.fermion_dim), boson);
}

/// Dense operator on the composite space with verified structural flags.
class QOperator {
 public:
  enum Check : unsigned { kHermitian = 1u, kUnitary = 2u, kIdentity = 4u };

  QOperator() = default;

  explicit QOperator(DenseMatrix m, unsigned checks = kHermitian | kIdentity)
      : matrix_(std::move(m)) {
    if (matrix_.rows() != matrix_.cols()) throw std::invalid_argument("QOperator must be square");
    if (checks & kHermitian) hermitian_ = max_abs(matrix_ - matrix_.adjoint()) <= tol::hermitian;
    if (checks & kIdentity) {
      identity_ = max_abs(matrix_ - DenseMatrix::Identity(dim(), dim())) <= tol::hermitian;
    }
    if (checks & kUnitary) {
      unitary_ = max_abs(matrix_.adjoint() * matrix_ - DenseMatrix::Identity(dim(), dim())) <=
                 tol::unitary;
    }
  }

  const DenseMatrix& matrix() const { return matrix_; }
  Index dim() const { return matrix_.rows(); }
  bool hermitian() const { return hermitian_; }
  bool unitary() const { return unitary_; }
  bool identity() const { return identity_; }

 private:
  DenseMatrix matrix_;
  bool hermitian_ = false;
  bool unitary_ = false;
  bool identity_ = false;
};

/// op_norm(a - b).
template <class A, class B>
double defect(const A& a, const B& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("defect: dimension mismatch");
  }
  const auto diff = (a - b).eval();
  return op_norm(diff);
}

inline double defect(const QOperator& a, const QOperator& b) { return defect(a.matrix(), b.matrix()); }
inline double op_norm(const QOperator& a) { return op_norm(a.matrix()); }

}  // namespace gaugework
