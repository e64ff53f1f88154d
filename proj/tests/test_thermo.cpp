#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace gaugework;
using Catch::Approx;

TEST_CASE("Gibbs state matches a dense reference", "[thermo]") {
  const auto m = gw_test::make_model(gw_test::chain(2, 2, 1.0, 0.3));
  const DenseMatrix h = to_dense(m.hamiltonian.total);
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h);
  for (double beta : {0.2, 1.0, 5.0, 40.0}) {
    const ThermalState st = gibbs_state(m.hamiltonian.total, beta);
    const RealVector w = (-beta * es.eigenvalues().array()).exp().matrix();
    const DenseMatrix ref = es.eigenvectors() * (w / w.sum()).cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
    CHECK(max_abs(DenseMatrix(st.rho.matrix() - ref)) <= 1e-12);
    CHECK(st.rho.matrix().trace().real() == Approx(1.0).margin(1e-12));
    CHECK(st.rho.hermitian());
    CHECK(st.log_partition == Approx(std::log(w.sum())).epsilon(1e-12));
    CHECK(st.support == Support::full);
  }
}

TEST_CASE("large beta does not overflow", "[thermo]") {
  const auto m = gw_test::make_model(gw_test::chain(2, 2));
  const ThermalState st = gibbs_state(m.hamiltonian.total, 1e4);
  CHECK(st.rho.matrix().allFinite());
  CHECK(st.rho.matrix().trace().real() == Approx(1.0).margin(1e-12));
  CHECK(std::isfinite(st.log_partition));
}

TEST_CASE("physical Gibbs state is supported on the kernel", "[thermo]") {
  const auto m = gw_test::make_model(gw_test::chain(2, 3));
  const GaussSet g = build_gauss(m.fields);
  const ThermalState st = gibbs_state(m.hamiltonian.total, 1.0, Support::physical, g);
  const DenseMatrix& p = g.physical_projector;
  const DenseMatrix& rho = st.rho.matrix();
  CHECK(max_abs(DenseMatrix(p * rho * p - rho)) <= 1e-12);
  CHECK(rho.trace().real() == Approx(1.0).margin(1e-12));
  for (const auto& gx : g.generators) CHECK(op_norm(DenseMatrix(gx * rho)) <= 1e-8);
}

TEST_CASE("invalid inputs", "[thermo]") {
  const auto m = gw_test::make_model(gw_test::chain(2, 2));
  CHECK_THROWS_AS(gibbs_state(m.hamiltonian.total, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gibbs_state(m.hamiltonian.total, -1.0), std::invalid_argument);
  const ThermalState st = gibbs_state(m.hamiltonian.total, 1.0);
  CHECK_THROWS_AS(work(QOperator(DenseMatrix(2.0 * DenseMatrix::Identity(64, 64))), m.hamiltonian.total, st),
                  std::invalid_argument);
}

TEST_CASE("work orderings and passivity of Gibbs states", "[thermo]") {
  const auto m = gw_test::make_model(gw_test::chain(2, 2));
  const ThermalState st = gibbs_state(m.hamiltonian.total, 1.0);
  const WorkValue idle = work(QOperator(DenseMatrix::Identity(64, 64), QOperator::kUnitary), m.hamiltonian.total, st);
  CHECK(std::abs(idle.value) <= 1e-14);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const QOperator u(gw_test::reference_exp_i(gw_test::random_hermitian(64, seed), 1.0), QOperator::kUnitary);
    const WorkValue w = work(u, m.hamiltonian.total, st);
    CHECK(std::abs(w.eq2 - w.eq3) <= 1e-10);
    CHECK(w.value >= -1e-12);
  }
  CHECK(std::abs(min_work_oracle(m.hamiltonian.total, st)) <= 1e-10);
}

TEST_CASE("oracle on a population-inverted qubit", "[thermo]") {
  // H = diag(0, 1), rho = diag(0.2, 0.8): swapping the levels extracts 0.6.
  RealVector e(2), p(2);
  e << 0.0, 1.0;
  p << 0.2, 0.8;
  CHECK(min_work_oracle(e, p, 0.8) == Approx(-0.6).margin(1e-15));

  ThermalState st;
  DenseMatrix rho = DenseMatrix::Zero(2, 2);
  rho(0, 0) = 0.2;
  rho(1, 1) = 0.8;
  st.rho = QOperator(rho);
  SparseMatrix h(2, 2);
  h.insert(1, 1) = 1.0;
  DenseMatrix swap = DenseMatrix::Zero(2, 2);
  swap(0, 1) = swap(1, 0) = 1.0;
  const WorkValue w = work(QOperator(swap, QOperator::kUnitary), h, st);
  CHECK(w.value == Approx(-0.6).margin(1e-15));
  CHECK(min_work_oracle(h, st) == Approx(-0.6).margin(1e-14));
  CHECK_THROWS_AS(min_work_oracle(e, RealVector::Ones(3), 0.0), std::invalid_argument);
}
