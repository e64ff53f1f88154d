#pragma once

// Gauss generators G(x) = div E(x) - rho(x), the physical subspace (their joint
// kernel), and tools to keep unitaries inside it.

#include <algorithm>
#include <limits>
#include <vector>

#include "gaugework/fields.hpp"
#include "gaugework/linalg.hpp"
#include "gaugework/model_space.hpp"

namespace gaugework {

inline SparseMatrix gauss_generator(const FieldSet& f, int x) {
  return SparseMatrix(divergence_of_e(f, x) - f.charge_density[static_cast<std::size_t>(x)]);
}

inline std::vector<SparseMatrix> gauss_generators(const FieldSet& f) {
  std::vector<SparseMatrix> g;
  for (int x = 0; x < f.space.num_sites; ++x) g.push_back(gauss_generator(f, x));
  return g;
}

struct GaussSet {
  std::vector<SparseMatrix> generators;
  DenseMatrix basis;               // orthonormal columns spanning the physical subspace
  DenseMatrix physical_projector;  // basis * basis^dagger
  Index physical_dim = 0;
  double kernel_tolerance = tol::kernel;
  // When the kernel is empty: smallest |eigenvalue| met at each restriction step.
  std::vector<double> nearest_eigenvalues;
};

/// Joint kernel by successive restriction: diagonalize G(0), keep eigenvectors with
/// |eigenvalue| <= tolerance, compress G(1) onto them, and so on. Valid because the
/// generators commute.
inline GaussSet build_gauss(const FieldSet& f, double kernel_tolerance = tol::kernel) {
  f.space.require_dense("Gauss projector");
  GaussSet g;
  g.generators = gauss_generators(f);
  g.kernel_tolerance = kernel_tolerance;
  const Index dim = f.space.total_dim;

  DenseMatrix basis;
  for (std::size_t x = 0; x < g.generators.size(); ++x) {
    double nearest = std::numeric_limits<double>::infinity();
    if (x == 0) {
      const HermitianSpectrum spectrum(g.generators[0]);
      std::vector<DenseVector> kept;
      for (const auto& block : spectrum.blocks()) {
        for (Index i = 0; i < block.values.size(); ++i) {
          nearest = std::min(nearest, std::abs(block.values(i)));
          if (std::abs(block.values(i)) > kernel_tolerance) continue;
          DenseVector v = DenseVector::Zero(dim);
          v(block.support) = block.vectors.col(i);
          kept.push_back(std::move(v));
        }
      }
      basis.resize(dim, static_cast<Index>(kept.size()));
      for (std::size_t k = 0; k < kept.size(); ++k) basis.col(static_cast<Index>(k)) = kept[k];
    } else {
      const DenseMatrix compressed = basis.adjoint() * (g.generators[x] * basis);
      Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(compressed);
      if (solver.info() != Eigen::Success) {
        throw NumericFailure("build_gauss: eigensolver failed on compressed generator");
      }
      std::vector<Index> keep;
      for (Index i = 0; i < solver.eigenvalues().size(); ++i) {
        nearest = std::min(nearest, std::abs(solver.eigenvalues()(i)));
        if (std::abs(solver.eigenvalues()(i)) <= kernel_tolerance) keep.push_back(i);
      }
      basis = basis * solver.eigenvectors()(Eigen::all, keep);
    }
    if (basis.cols() == 0) {
      g.nearest_eigenvalues.push_back(nearest);
      break;
    }
  }
  g.basis = basis;
  g.physical_dim = basis.cols();
  g.physical_projector = basis * basis.adjoint();
  return g;
}

/// max_{x,y} ||[G(x), G(y)]||.
inline double generator_commutator_defect(const GaussSet& g) {
  double worst = 0.0;
  for (std::size_t x = 0; x < g.generators.size(); ++x) {
    for (std::size_t y = x + 1; y < g.generators.size(); ++y) {
      worst = std::max(worst, op_norm(commutator(g.generators[x], g.generators[y])));
    }
  }
  return worst;
}

/// ||P^2 - P||.
inline double projector_idempotence_defect(const GaussSet& g) {
  if (g.physical_dim == 0) return 0.0;
  const DenseMatrix& p = g.physical_projector;
  return op_norm(DenseMatrix(p * p - p));
}

/// max_x ||G(x) V P||: how far V moves physical states out of the kernel.
inline double compatibility_defect(const DenseMatrix& v, const GaussSet& g) {
  if (g.physical_dim == 0) return 0.0;
  const DenseMatrix moved = v * g.basis;
  double worst = 0.0;
  for (const auto& gx : g.generators) {
    const DenseMatrix r = gx * moved;
    worst = std::max(worst, op_norm(r));
  }
  return worst;
}

inline double check_unitary_compatibility(const QOperator& v, const GaussSet& g) {
  if (!v.unitary()) {
    const QOperator checked(v.matrix(), QOperator::kUnitary);
    if (!checked.unitary()) throw std::invalid_argument("check_unitary_compatibility: V is not unitary");
  }
  return compatibility_defect(v.matrix(), g);
}

/// P g P + (1-P) g (1-P): the part of g that maps the physical subspace and its
/// complement into themselves.
inline DenseMatrix commutant_project(const DenseMatrix& generator, const GaussSet& g) {
  const DenseMatrix& q = g.basis;
  const DenseMatrix left = q.adjoint() * generator;   // Q^dagger g
  const DenseMatrix right = generator * q;            // g Q
  const DenseMatrix inner = left * q;                 // Q^dagger g Q
  return generator - q * left - right * q.adjoint() + 2.0 * (q * inner * q.adjoint());
}

inline DenseMatrix commutant_project(const SparseMatrix& generator, const GaussSet& g) {
  return commutant_project(to_dense(generator), g);
}

}  // namespace gaugework
