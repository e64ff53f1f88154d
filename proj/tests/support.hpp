#pragma once

#include <random>

#include "gaugework/gaugework.hpp"

namespace gw_test {

using namespace gaugework;

struct Model {
  LatticeConfig config;
  FieldSet fields;
  HamiltonianParts hamiltonian;
};

inline LatticeConfig chain(int sites, int n_max, double charge = 1.0, double mass = 0.0) {
  LatticeConfig c;
  c.num_sites = sites;
  c.n_max = n_max;
  c.charge = charge;
  c.mass = mass;
  return c;
}

inline Model make_model(const LatticeConfig& c) {
  Model m;
  m.config = c;
  m.fields = build_fields(build_space(c), c);
  m.hamiltonian = build_h_total(m.fields, c);
  return m;
}

inline DenseMatrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      const double re = d(gen);
      m(i, j) = cplx(re, d(gen));
    }
  }
  return m;
}

inline DenseMatrix random_hermitian(Index n, std::uint64_t seed) {
  const DenseMatrix m = random_matrix(n, n, seed);
  return 0.5 * (m + m.adjoint());
}

/// Dense exp(i t H) from Eigen's own eigensolver, independent of HermitianSpectrum.
inline DenseMatrix reference_exp_i(const DenseMatrix& h, double t) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h);
  const DenseVector phases = (kI * t * es.eigenvalues().cast<cplx>().array()).exp().matrix();
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// Largest singular value from a full SVD.
inline double reference_norm(const DenseMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<DenseMatrix> svd(m);
  return svd.singularValues()(0);
}

/// Random chi with max |grad chi| = 1.
inline ChiField random_chi(const SpaceDescriptor& s, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  ChiField chi;
  for (int x = 0; x < s.num_sites; ++x) chi.values.push_back(d(gen));
  double worst = 0.0;
  for (double g : lattice_grad(s, chi.values)) worst = std::max(worst, std::abs(g));
  for (double& v : chi.values) v /= worst;
  return chi;
}

}  // namespace gw_test
