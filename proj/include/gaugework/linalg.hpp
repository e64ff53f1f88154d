#pragma once

// Dense/sparse helpers shared by every module: commutators, traces, norms, and a
// block-aware Hermitian eigensolver.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "gaugework/types.hpp"

namespace gaugework {

inline SparseMatrix to_sparse(const DenseMatrix& m) { return m.sparseView(); }
inline DenseMatrix to_dense(const SparseMatrix& m) { return DenseMatrix(m); }

inline SparseMatrix sparse_identity(Index dim) {
  SparseMatrix id(dim, dim);
  id.setIdentity();
  return id;
}

template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double max_abs(const SparseMatrix& m) {
  double result = 0.0;
  for (Index k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      result = std::max(result, std::abs(it.value()));
    }
  }
  return result;
}

inline SparseMatrix commutator(const SparseMatrix& a, const SparseMatrix& b) {
  return SparseMatrix(a * b - b * a);
}
inline DenseMatrix commutator(const DenseMatrix& a, const DenseMatrix& b) { return a * b - b * a; }
inline DenseMatrix commutator(const SparseMatrix& a, const DenseMatrix& b) { return a * b - b * a; }
inline DenseMatrix commutator(const DenseMatrix& a, const SparseMatrix& b) { return a * b - b * a; }

inline SparseMatrix anticommutator(const SparseMatrix& a, const SparseMatrix& b) {
  return SparseMatrix(a * b + b * a);
}
inline DenseMatrix anticommutator(const DenseMatrix& a, const DenseMatrix& b) { return a * b + b * a; }

/// tr(a b) without forming the product.
inline cplx trace_product(const DenseMatrix& a, const DenseMatrix& b) {
  return a.transpose().cwiseProduct(b).sum();
}

inline cplx trace_product(const SparseMatrix& a, const DenseMatrix& b) {
  cplx sum = 0.0;
  for (Index k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
      sum += it.value() * b(it.col(), it.row());
    }
  }
  return sum;
}

/// State-weighted residual sqrt(tr[r rho r^dagger]). Bounds |tr[rho r]| by Cauchy-Schwarz.
inline double weighted_norm(const SparseMatrix& r, const DenseMatrix& rho) {
  // sum_i sum_{j,k} R_ik rho_kj conj(R_ij), over pairs of nonzeros in each row.
  using RowMajor = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
  const RowMajor rows(r);
  cplx sum = 0.0;
  for (Index i = 0; i < rows.outerSize(); ++i) {
    for (RowMajor::InnerIterator a(rows, i); a; ++a) {
      for (RowMajor::InnerIterator b(rows, i); b; ++b) {
        sum += b.value() * rho(b.col(), a.col()) * std::conj(a.value());
      }
    }
  }
  return std::sqrt(std::max(0.0, sum.real()));
}

inline double weighted_norm(const DenseMatrix& r, const DenseMatrix& rho) {
  const DenseMatrix x = r * rho;
  const cplx sum = x.cwiseProduct(r.conjugate()).sum();
  return std::sqrt(std::max(0.0, sum.real()));
}

namespace detail {

inline DenseVector lanczos_start(Index n) {
  std::mt19937_64 gen(0x5eed5eedULL);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DenseVector v(n);
  for (Index i = 0; i < n; ++i) {
    const double re = dist(gen);
    const double im = dist(gen);
    v(i) = cplx(re, im);
  }
  return v.normalized();
}

}  // namespace detail

/// Largest singular value, by Lanczos on m^dagger m with full reorthogonalization.
/// Exact once the Krylov space is exhausted; otherwise stops when the top Ritz
/// residual is below 1e-14 relative.
template <class Matrix>
double op_norm(const Matrix& m) {
  const Index n = m.cols();
  if (m.rows() == 0 || n == 0) return 0.0;
  if (max_abs(m) == 0.0) return 0.0;

  const Index max_steps = std::min<Index>(n, 400);
  std::vector<DenseVector> basis;
  std::vector<double> alpha;
  std::vector<double> beta;
  DenseVector q = detail::lanczos_start(n);
  double theta = 0.0;
  double residual = 0.0;
  for (Index k = 0; k < max_steps; ++k) {
    basis.push_back(q);
    const DenseVector mq = m * q;
    DenseVector w = m.adjoint() * mq;
    alpha.push_back(q.dot(w).real());
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) w -= b * b.dot(w);
    }
    const double next = w.norm();

    const auto size = static_cast<Index>(alpha.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    tri.computeFromTridiagonal(Eigen::Map<const Eigen::VectorXd>(alpha.data(), size),
                               Eigen::Map<const Eigen::VectorXd>(beta.data(), size - 1),
                               Eigen::ComputeEigenvectors);
    theta = tri.eigenvalues()(size - 1);
    residual = next * std::abs(tri.eigenvectors()(size - 1, size - 1));
    if (next <= 1e-13 * theta || residual <= 1e-14 * theta || size == n) {
      residual = 0.0;
      break;
    }
    beta.push_back(next);
    q = w / next;
  }
  if (residual > 1e-8 * theta) {
    throw NumericFailure("op_norm: Lanczos did not converge (relative residual " +
                         std::to_string(residual / theta) + ")");
  }
  return std::sqrt(std::max(theta, 0.0));
}

/// Eigendecomposition of a Hermitian matrix that first splits the index set into
/// the connected components of its exact nonzero pattern and solves each block
/// separately. Only the lower triangle of each block is read.
class HermitianSpectrum {
 public:
  struct Block {
    std::vector<Index> support;
    RealVector values;
    DenseMatrix vectors;
  };

  HermitianSpectrum() = default;

  explicit HermitianSpectrum(const SparseMatrix& h) : dim_(h.rows()) {
    require_square(h.rows(), h.cols());
    DisjointSets sets(dim_);
    for (Index k = 0; k < h.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(h, k); it; ++it) {
        if (it.value() != cplx(0.0)) sets.unite(it.row(), it.col());
      }
    }
    std::vector<Index> local(static_cast<std::size_t>(dim_), -1);
    for (auto& support : sets.groups()) {
      const auto size = static_cast<Index>(support.size());
      for (Index i = 0; i < size; ++i) local[static_cast<std::size_t>(support[i])] = i;
      DenseMatrix block = DenseMatrix::Zero(size, size);
      for (Index j = 0; j < size; ++j) {
        for (SparseMatrix::InnerIterator it(h, support[static_cast<std::size_t>(j)]); it; ++it) {
          // Stored zeros may connect to other components; they carry nothing.
          if (it.value() != cplx(0.0)) block(local[static_cast<std::size_t>(it.row())], j) = it.value();
        }
      }
      add_block(std::move(support), block);
    }
  }

  explicit HermitianSpectrum(const DenseMatrix& h) : dim_(h.rows()) {
    require_square(h.rows(), h.cols());
    DisjointSets sets(dim_);
    for (Index j = 0; j < dim_; ++j) {
      for (Index i = j + 1; i < dim_; ++i) {
        if (h(i, j) != cplx(0.0) || h(j, i) != cplx(0.0)) sets.unite(i, j);
      }
    }
    for (auto& support : sets.groups()) {
      DenseMatrix block = h(support, support);
      add_block(std::move(support), block);
    }
  }

  Index dim() const { return dim_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  /// All eigenvalues, ascending.
  RealVector eigenvalues() const {
    RealVector all(dim_);
    Index offset = 0;
    for (const auto& b : blocks_) {
      all.segment(offset, b.values.size()) = b.values;
      offset += b.values.size();
    }
    std::sort(all.data(), all.data() + all.size());
    return all;
  }

  /// Eigenvectors as columns, ordered to match eigenvalues().
  DenseMatrix eigenvectors() const {
    std::vector<std::pair<double, std::pair<std::size_t, Index>>> order;
    order.reserve(static_cast<std::size_t>(dim_));
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      for (Index i = 0; i < blocks_[b].values.size(); ++i) {
        order.push_back({blocks_[b].values(i), {b, i}});
      }
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    DenseMatrix vectors = DenseMatrix::Zero(dim_, dim_);
    for (Index col = 0; col < dim_; ++col) {
      const auto [b, i] = order[static_cast<std::size_t>(col)].second;
      const Block& block = blocks_[b];
      for (std::size_t r = 0; r < block.support.size(); ++r) {
        vectors(block.support[r], col) = block.vectors(static_cast<Index>(r), i);
      }
    }
    return vectors;
  }

  /// f(H) = sum_k f(e_k) |v_k><v_k|, assembled block by block.
  template <class F>
  DenseMatrix apply(F&& f) const {
    DenseMatrix result = DenseMatrix::Zero(dim_, dim_);
    for (const auto& b : blocks_) {
      DenseVector fv(b.values.size());
      for (Index i = 0; i < b.values.size(); ++i) fv(i) = cplx(f(b.values(i)));
      const DenseMatrix local = b.vectors * fv.asDiagonal() * b.vectors.adjoint();
      result(b.support, b.support) = local;
    }
    return result;
  }

  /// Same as apply(), stored sparse: entries outside the diagonal blocks are exact zeros.
  template <class F>
  SparseMatrix apply_sparse(F&& f) const {
    std::vector<Eigen::Triplet<cplx>> entries;
    for (const auto& b : blocks_) {
      DenseVector fv(b.values.size());
      for (Index i = 0; i < b.values.size(); ++i) fv(i) = cplx(f(b.values(i)));
      const DenseMatrix local = b.vectors * fv.asDiagonal() * b.vectors.adjoint();
      for (std::size_t j = 0; j < b.support.size(); ++j) {
        for (std::size_t i = 0; i < b.support.size(); ++i) {
          const cplx v = local(static_cast<Index>(i), static_cast<Index>(j));
          if (v != cplx(0.0)) entries.emplace_back(b.support[i], b.support[j], v);
        }
      }
    }
    SparseMatrix result(dim_, dim_);
    result.setFromTriplets(entries.begin(), entries.end());
    return result;
  }

 private:
  class DisjointSets {
   public:
    explicit DisjointSets(Index n) : parent_(static_cast<std::size_t>(n)) {
      std::iota(parent_.begin(), parent_.end(), Index{0});
    }
    Index find(Index x) {
      while (parent_[static_cast<std::size_t>(x)] != x) {
        auto& p = parent_[static_cast<std::size_t>(x)];
        p = parent_[static_cast<std::size_t>(p)];
        x = p;
      }
      return x;
    }
    void unite(Index a, Index b) {
      a = find(a);
      b = find(b);
      if (a == b) return;
      if (a < b) std::swap(a, b);
      parent_[static_cast<std::size_t>(a)] = b;
    }
    // Groups in order of their smallest member, members ascending.
    std::vector<std::vector<Index>> groups() {
      std::vector<std::vector<Index>> out;
      std::vector<Index> slot(parent_.size(), -1);
      for (Index i = 0; i < static_cast<Index>(parent_.size()); ++i) {
        const Index root = find(i);
        auto& s = slot[static_cast<std::size_t>(root)];
        if (s < 0) {
          s = static_cast<Index>(out.size());
          out.emplace_back();
        }
        out[static_cast<std::size_t>(s)].push_back(i);
      }
      return out;
    }

   private:
    std::vector<Index> parent_;
  };

  static void require_square(Index rows, Index cols) {
    if (rows != cols) throw std::invalid_argument("HermitianSpectrum: matrix is not square");
  }

  void add_block(std::vector<Index> support, const DenseMatrix& block) {
    Block b;
    b.support = std::move(support);
    if (block.rows() == 1) {
      b.values = RealVector::Constant(1, block(0, 0).real());
      b.vectors = DenseMatrix::Ones(1, 1);
    } else {
      Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(block);
      if (solver.info() != Eigen::Success) {
        throw NumericFailure("HermitianSpectrum: eigensolver did not converge on a block of size " +
                             std::to_string(block.rows()));
      }
      b.values = solver.eigenvalues();
      b.vectors = solver.eigenvectors();
    }
    blocks_.push_back(std::move(b));
  }

  Index dim_ = 0;
  std::vector<Block> blocks_;
};

/// exp(i t H) for Hermitian H.
template <class Matrix>
DenseMatrix exp_i(const Matrix& h, double t) {
  const HermitianSpectrum spectrum(h);
  return spectrum.apply([t](double e) { return std::exp(kI * (t * e)); });
}

}  // namespace gaugework
