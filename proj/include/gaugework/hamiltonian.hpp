#pragma once

// H0 = H_dirac + H_maxwell - sum_l J_l A_l on the lattice.

#include <algorithm>

#include "gaugework/fields.hpp"
#include "gaugework/gauss.hpp"
#include "gaugework/linalg.hpp"

namespace gaugework {

struct HamiltonianParts {
  SparseMatrix dirac;
  SparseMatrix maxwell;
  SparseMatrix coupling;
  SparseMatrix total;
  double hermiticity_defect = 0.0;  // largest max|M - M^dagger| over the four parts
  double gauss_defect = 0.0;        // max_x op_norm([H0, G(x)])
};

/// Central-difference hopping -(i/2) sum_l (h_l - h_l^dagger).
inline SparseMatrix build_h_hopping(const FieldSet& f) {
  SparseMatrix h(f.space.total_dim, f.space.total_dim);
  for (const auto& hop : f.hopping) {
    h += (-0.5 * kI) * SparseMatrix(hop - SparseMatrix(hop.adjoint()));
  }
  return h;
}

inline SparseMatrix build_h_dirac(const FieldSet& f, const LatticeConfig& config) {
  SparseMatrix h = build_h_hopping(f);
  if (config.mass != 0.0) {
    const DenseMatrix b = spinor::beta();
    for (int x = 0; x < f.space.num_sites; ++x) h += config.mass * f.bilinear(x, b, x);
  }
  return h;
}

/// (1/2) sum_l E_l^2, plus (1/2) sum_p B_p^2 in 2D.
inline SparseMatrix build_h_maxwell(const FieldSet& f) {
  SparseMatrix h(f.space.total_dim, f.space.total_dim);
  for (const auto& e : f.e_field) h += 0.5 * SparseMatrix(e * e);
  for (const auto& b : f.b_field) h += 0.5 * SparseMatrix(b * b);
  return h;
}

inline SparseMatrix build_h_coupling(const FieldSet& f) {
  SparseMatrix h(f.space.total_dim, f.space.total_dim);
  for (std::size_t l = 0; l < f.current.size(); ++l) {
    h -= SparseMatrix(f.current[l] * f.a_field[l]);
  }
  return h;
}

inline double gauss_commutator_defect(const SparseMatrix& h, const FieldSet& f) {
  double worst = 0.0;
  for (const auto& g : gauss_generators(f)) worst = std::max(worst, op_norm(commutator(h, g)));
  return worst;
}

inline HamiltonianParts build_h_total(const FieldSet& f, const LatticeConfig& config) {
  HamiltonianParts parts;
  parts.dirac = build_h_dirac(f, config);
  parts.maxwell = build_h_maxwell(f);
  parts.coupling = build_h_coupling(f);
  parts.total = parts.dirac + parts.maxwell + parts.coupling;
  for (const auto* m : {&parts.dirac, &parts.maxwell, &parts.coupling, &parts.total}) {
    parts.hermiticity_defect =
        std::max(parts.hermiticity_defect, max_abs(SparseMatrix(*m - SparseMatrix(m->adjoint()))));
  }
  parts.gauss_defect = gauss_commutator_defect(parts.total, f);
  return parts;
}

}  // namespace gaugework
