#pragma once

// Lattice field operators and their algebra.
//
// Per link:  A = (a + a^dagger)/sqrt2,  E = i(a - a^dagger)/sqrt2,  so [A, E] = -i
// below the truncation edge and [A, E] = -i(I - n_max P_top) on the truncated ladder.
// Spinors have two components; alpha_x = sigma_x, alpha_y = sigma_y, beta = sigma_z.
// Fermion bilinears use the commutator ordering (1/2) sum M_ab [psi^dagger_a, psi_b].

#include <array>
#include <span>
#include <vector>

#include "gaugework/linalg.hpp"
#include "gaugework/model_space.hpp"

namespace gaugework {

namespace spinor {

inline DenseMatrix alpha(int direction) {
  DenseMatrix m = DenseMatrix::Zero(2, 2);
  if (direction == 0) {
    m(0, 1) = 1.0;
    m(1, 0) = 1.0;
  } else {
    m(0, 1) = -kI;
    m(1, 0) = kI;
  }
  return m;
}

inline DenseMatrix beta() {
  DenseMatrix m = DenseMatrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  return m;
}

}  // namespace spinor

struct FieldSet {
  SpaceDescriptor space;
  double charge = 0.0;
  std::vector<std::array<SparseMatrix, 2>> psi;  // [site][spinor], annihilators
  std::vector<SparseMatrix> a_field;             // [link]
  std::vector<SparseMatrix> e_field;             // [link]
  std::vector<SparseMatrix> b_field;             // [plaquette], 2D only
  std::vector<SparseMatrix> hopping;             // [link] psi^dagger_tail alpha psi_head
  std::vector<SparseMatrix> current;             // [link]
  std::vector<SparseMatrix> charge_density;      // [site]
  std::vector<SparseMatrix> top_projector;       // [link] projector on level n_max-1

  /// (1/2) sum_ab m_ab (psi^dagger_{x,a} psi_{y,b} - psi_{y,b} psi^dagger_{x,a}).
  SparseMatrix bilinear(int x, const DenseMatrix& m, int y) const {
    SparseMatrix out(space.total_dim, space.total_dim);
    for (int a = 0; a < 2; ++a) {
      const SparseMatrix create = psi[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)].adjoint();
      for (int b = 0; b < 2; ++b) {
        if (m(a, b) == cplx(0.0)) continue;
        const SparseMatrix& annihilate = psi[static_cast<std::size_t>(y)][static_cast<std::size_t>(b)];
        out += (0.5 * m(a, b)) * SparseMatrix(create * annihilate - annihilate * create);
      }
    }
    return out;
  }
};

inline FieldSet build_fields(const SpaceDescriptor& space, const LatticeConfig& config) {
  FieldSet f;
  f.space = space;
  f.charge = config.charge;

  const DenseMatrix lower = local::fermion_lowering();
  f.psi.resize(static_cast<std::size_t>(space.num_sites));
  for (int x = 0; x < space.num_sites; ++x) {
    for (int a = 0; a < 2; ++a) {
      f.psi[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)] =
          embed(space, lower, FermionMode{space.mode(x, a)});
    }
  }

  const DenseMatrix ladder = local::ladder_lowering(space.n_max);
  const double root_half = std::sqrt(0.5);
  const DenseMatrix a_local = root_half * (ladder + ladder.adjoint());
  const DenseMatrix e_local = (kI * root_half) * (ladder - ladder.adjoint());
  DenseMatrix top_local = DenseMatrix::Zero(space.n_max, space.n_max);
  top_local(space.n_max - 1, space.n_max - 1) = 1.0;
  for (int l = 0; l < space.links; ++l) {
    f.a_field.push_back(embed(space, a_local, Link{l}));
    f.e_field.push_back(embed(space, e_local, Link{l}));
    f.top_projector.push_back(embed(space, top_local, Link{l}));
  }

  for (int p = 0; p < space.plaquettes; ++p) {
    SparseMatrix b(space.total_dim, space.total_dim);
    for (const auto& [l, sign] : space.plaquette(p)) {
      b += static_cast<double>(sign) * f.a_field[static_cast<std::size_t>(l)];
    }
    f.b_field.push_back(b);
  }

  const double q = config.charge;
  for (int l = 0; l < space.links; ++l) {
    SparseMatrix h = f.bilinear(space.link_tail(l), spinor::alpha(space.link_direction(l)),
                                space.link_head(l));
    f.current.push_back((0.5 * q) * SparseMatrix(h + SparseMatrix(h.adjoint())));
    f.hopping.push_back(std::move(h));
  }
  const DenseMatrix unit = DenseMatrix::Identity(2, 2);
  for (int x = 0; x < space.num_sites; ++x) {
    f.charge_density.push_back(q * f.bilinear(x, unit, x));
  }
  return f;
}

/// Largest CAR violation over all mode pairs: {psi_i, psi^dagger_j} - delta_ij and {psi_i, psi_j}.
inline double car_defect(const FieldSet& f) {
  std::vector<SparseMatrix> modes;
  for (const auto& site : f.psi) {
    for (const auto& m : site) modes.push_back(m);
  }
  const SparseMatrix id = sparse_identity(f.space.total_dim);
  double worst = 0.0;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    for (std::size_t j = 0; j < modes.size(); ++j) {
      SparseMatrix mixed = anticommutator(modes[i], SparseMatrix(modes[j].adjoint()));
      if (i == j) mixed -= id;
      worst = std::max(worst, op_norm(mixed));
      if (j >= i) worst = std::max(worst, op_norm(anticommutator(modes[i], modes[j])));
    }
  }
  return worst;
}

/// Largest commutator between any link field (A or E) and any psi or psi^dagger.
inline double cross_defect(const FieldSet& f) {
  double worst = 0.0;
  for (int l = 0; l < f.space.links; ++l) {
    for (const auto& site : f.psi) {
      for (const auto& m : site) {
        const SparseMatrix md = m.adjoint();
        for (const auto* field : {&f.a_field[static_cast<std::size_t>(l)], &f.e_field[static_cast<std::size_t>(l)]}) {
          worst = std::max(worst, op_norm(commutator(*field, m)));
          worst = std::max(worst, op_norm(commutator(*field, md)));
        }
      }
    }
  }
  return worst;
}

/// Largest of [A_l, A_k], [E_l, E_k] over all pairs and [A_l, E_k] over l != k.
inline double link_commutator_defect(const FieldSet& f) {
  double worst = 0.0;
  const auto links = static_cast<std::size_t>(f.space.links);
  for (std::size_t l = 0; l < links; ++l) {
    for (std::size_t k = 0; k < links; ++k) {
      worst = std::max(worst, op_norm(commutator(f.a_field[l], f.a_field[k])));
      worst = std::max(worst, op_norm(commutator(f.e_field[l], f.e_field[k])));
      if (l != k) worst = std::max(worst, op_norm(commutator(f.a_field[l], f.e_field[k])));
    }
  }
  return worst;
}

/// [A_l, E_l] + i I for one link.
inline SparseMatrix ccr_residual(const FieldSet& f, int l) {
  const auto i = static_cast<std::size_t>(l);
  SparseMatrix r = commutator(f.a_field[i], f.e_field[i]);
  r += kI * sparse_identity(f.space.total_dim);
  return r;
}

/// Per-link op_norm([A_l, E_l] + iI); equals n_max on the truncated ladder.
inline std::vector<double> ccr_defect(const FieldSet& f) {
  std::vector<double> out;
  for (int l = 0; l < f.space.links; ++l) out.push_back(op_norm(ccr_residual(f, l)));
  return out;
}

/// Per-link CCR residual compressed to the states where that link is below its top level.
inline std::vector<double> ccr_defect_below_edge(const FieldSet& f) {
  std::vector<double> out;
  const SparseMatrix id = sparse_identity(f.space.total_dim);
  for (int l = 0; l < f.space.links; ++l) {
    const SparseMatrix below = id - f.top_projector[static_cast<std::size_t>(l)];
    out.push_back(op_norm(SparseMatrix(below * ccr_residual(f, l) * below)));
  }
  return out;
}

/// Per-link thermal weight of the truncation edge, tr[rho P_top].
inline std::vector<double> edge_population(const FieldSet& f, const DenseMatrix& rho) {
  std::vector<double> out;
  for (const auto& p : f.top_projector) out.push_back(trace_product(p, rho).real());
  return out;
}

/// grad(chi) on link (x, x+e) = chi(x+e) - chi(x).
inline std::vector<double> lattice_grad(const SpaceDescriptor& s, std::span<const double> chi) {
  if (static_cast<int>(chi.size()) != s.num_sites) {
    throw std::invalid_argument("lattice_grad: expected one value per site");
  }
  std::vector<double> g(static_cast<std::size_t>(s.links));
  for (int l = 0; l < s.links; ++l) {
    g[static_cast<std::size_t>(l)] =
        chi[static_cast<std::size_t>(s.link_head(l))] - chi[static_cast<std::size_t>(s.link_tail(l))];
  }
  return g;
}

/// Outflow divergence: div F(x) = sum_e [F(x, x+e) - F(x-e, x)]. With this sign
/// sum_x chi(x) div F(x) = -sum_l grad chi(l) F(l) on the periodic lattice.
inline std::vector<double> lattice_div(const SpaceDescriptor& s, std::span<const double> field) {
  if (static_cast<int>(field.size()) != s.links) {
    throw std::invalid_argument("lattice_div: expected one value per link");
  }
  std::vector<double> d(static_cast<std::size_t>(s.num_sites), 0.0);
  for (int x = 0; x < s.num_sites; ++x) {
    double sum = 0.0;
    for (int dir = 0; dir < s.dimension; ++dir) {
      sum += field[static_cast<std::size_t>(s.link(x, dir))] -
             field[static_cast<std::size_t>(s.link(s.neighbor(x, dir, -1), dir))];
    }
    d[static_cast<std::size_t>(x)] = sum;
  }
  return d;
}

/// Oriented plaquette sums (2D); empty in 1D.
inline std::vector<double> lattice_curl(const SpaceDescriptor& s, std::span<const double> field) {
  if (static_cast<int>(field.size()) != s.links) {
    throw std::invalid_argument("lattice_curl: expected one value per link");
  }
  std::vector<double> c;
  for (int p = 0; p < s.plaquettes; ++p) {
    double sum = 0.0;
    for (const auto& [l, sign] : s.plaquette(p)) sum += sign * field[static_cast<std::size_t>(l)];
    c.push_back(sum);
  }
  return c;
}

/// Operator divergence of E at site x, same sign convention as lattice_div.
inline SparseMatrix divergence_of_e(const FieldSet& f, int x) {
  const SpaceDescriptor& s = f.space;
  SparseMatrix d(s.total_dim, s.total_dim);
  for (int dir = 0; dir < s.dimension; ++dir) {
    d += f.e_field[static_cast<std::size_t>(s.link(x, dir))];
    d -= f.e_field[static_cast<std::size_t>(s.link(s.neighbor(x, dir, -1), dir))];
  }
  return d;
}

}  // namespace gaugework
