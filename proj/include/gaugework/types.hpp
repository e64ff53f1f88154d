#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace gaugework {

using cplx = std::complex<double>;
using Index = Eigen::Index;
using DenseMatrix = Eigen::MatrixXcd;
using DenseVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<cplx>;

inline constexpr cplx kI{0.0, 1.0};

/// Numerical thresholds shared across modules.
namespace tol {
inline constexpr double hermitian = 1e-12;
inline constexpr double unitary = 1e-10;
inline constexpr double kernel = 1e-8;
inline constexpr double trace_orderings = 1e-10;
inline constexpr double kick_reject = 1e-6;
}  // namespace tol

/// A Hilbert space (or a dense intermediate) would exceed its configured size limit.
class CapExceeded : public std::runtime_error {
 public:
  CapExceeded(const std::string& what, std::size_t required, std::size_t cap)
      : std::runtime_error(what + ": required dimension " + std::to_string(required) +
                           " exceeds cap " + std::to_string(cap)),
        required_(required),
        cap_(cap) {}

  std::size_t required() const { return required_; }
  std::size_t cap() const { return cap_; }

 private:
  std::size_t required_;
  std::size_t cap_;
};

/// An eigensolver failed or a numerical self-check did not hold.
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gaugework
