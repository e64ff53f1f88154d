#pragma once

// Gibbs states, the work functional in both trace orderings, and the closed-form
// minimum of the work over all unitaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string_view>

#include "gaugework/gauss.hpp"
#include "gaugework/linalg.hpp"
#include "gaugework/model_space.hpp"

namespace gaugework {

enum class Support { full, physical };

inline std::string_view to_string(Support s) { return s == Support::full ? "full" : "physical"; }

struct ThermalState {
  QOperator rho;
  double beta = 0.0;
  double partition_function = 0.0;
  double log_partition = 0.0;
  Support support = Support::full;
};

namespace detail {

struct Boltzmann {
  RealVector weights;  // exp(-beta (e - e_min)) / sum
  double log_partition;
};

inline Boltzmann boltzmann(const RealVector& energies, double beta) {
  const double e_min = energies.minCoeff();
  RealVector w = (-beta * (energies.array() - e_min)).exp().matrix();
  const double sum = w.sum();
  return {w / sum, std::log(sum) - beta * e_min};
}

inline ThermalState finish_state(DenseMatrix rho, double beta, double log_z, Support support) {
  ThermalState s;
  s.rho = QOperator(std::move(rho), QOperator::kHermitian);
  s.beta = beta;
  s.log_partition = log_z;
  s.partition_function = std::exp(log_z);
  s.support = support;
  return s;
}

}  // namespace detail

/// exp(-beta H) / Z on the full space. The spectrum is shifted by its minimum
/// before exponentiating.
inline ThermalState gibbs_state(const SparseMatrix& h, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("gibbs_state: beta must be positive");
  const HermitianSpectrum spectrum(h);
  const RealVector energies = spectrum.eigenvalues();
  const double e_min = energies.minCoeff();
  const auto b = detail::boltzmann(energies, beta);
  const double norm = std::exp(b.log_partition + beta * e_min);  // sum of shifted weights
  DenseMatrix rho =
      spectrum.apply([&](double e) { return std::exp(-beta * (e - e_min)) / norm; });
  return detail::finish_state(std::move(rho), beta, b.log_partition, Support::full);
}

/// Gibbs state of P H P restricted to the physical subspace, zero outside it.
inline ThermalState gibbs_state(const SparseMatrix& h, double beta, const GaussSet& gauss) {
  if (!(beta > 0.0)) throw std::invalid_argument("gibbs_state: beta must be positive");
  if (gauss.physical_dim == 0) {
    throw std::invalid_argument("gibbs_state: physical subspace is empty");
  }
  const DenseMatrix& q = gauss.basis;
  const DenseMatrix compressed = q.adjoint() * (h * q);
  const DenseMatrix hermitian = 0.5 * (compressed + compressed.adjoint());
  const HermitianSpectrum spectrum(hermitian);
  const RealVector energies = spectrum.eigenvalues();
  const double e_min = energies.minCoeff();
  const auto b = detail::boltzmann(energies, beta);
  const double norm = std::exp(b.log_partition + beta * e_min);
  const DenseMatrix inner =
      spectrum.apply([&](double e) { return std::exp(-beta * (e - e_min)) / norm; });
  return detail::finish_state(q * inner * q.adjoint(), beta, b.log_partition, Support::physical);
}

inline ThermalState gibbs_state(const SparseMatrix& h, double beta, Support support,
                                const GaussSet& gauss) {
  return support == Support::full ? gibbs_state(h, beta) : gibbs_state(h, beta, gauss);
}

struct WorkValue {
  double eq2 = 0.0;  // tr[H V rho V^dagger] - tr[H rho]
  double eq3 = 0.0;  // tr[V^dagger H V rho] - tr[H rho]
  double value = 0.0;
};

inline void require_unitary(const QOperator& v, const char* where) {
  if (v.unitary()) return;
  const QOperator checked(v.matrix(), QOperator::kUnitary);
  if (!checked.unitary()) throw std::invalid_argument(std::string(where) + ": operator is not unitary");
}

/// Work done by V on the state, evaluated in both trace orderings. Throws
/// NumericFailure if they disagree by more than 1e-10.
template <class Hamiltonian>
WorkValue work(const QOperator& v, const Hamiltonian& h, const ThermalState& state) {
  require_unitary(v, "work");
  const DenseMatrix& vm = v.matrix();
  const DenseMatrix& rho = state.rho.matrix();
  const double before = trace_product(h, rho).real();

  const DenseMatrix evolved = vm * rho * vm.adjoint();
  const DenseMatrix hv = h * vm;
  const DenseMatrix conjugated = vm.adjoint() * hv;

  WorkValue w;
  w.eq2 = trace_product(h, evolved).real() - before;
  w.eq3 = trace_product(conjugated, rho).real() - before;
  if (std::abs(w.eq2 - w.eq3) > tol::trace_orderings) {
    throw NumericFailure("work: trace orderings disagree by " + std::to_string(std::abs(w.eq2 - w.eq3)));
  }
  w.value = w.eq3;
  return w;
}

/// min over all unitaries of tr[V^dagger H V rho] - tr[H rho]: pair energies ascending
/// with populations descending.
inline double min_work_oracle(RealVector energies, RealVector populations, double mean_energy) {
  if (energies.size() != populations.size()) {
    throw std::invalid_argument("min_work_oracle: spectra have different sizes");
  }
  std::sort(energies.data(), energies.data() + energies.size());
  std::sort(populations.data(), populations.data() + populations.size(), std::greater<>());
  return energies.dot(populations) - mean_energy;
}

inline double min_work_oracle(const SparseMatrix& h, const ThermalState& state) {
  const DenseMatrix& rho = state.rho.matrix();
  return min_work_oracle(HermitianSpectrum(h).eigenvalues(), HermitianSpectrum(rho).eigenvalues(),
                         trace_product(h, rho).real());
}

}  // namespace gaugework
