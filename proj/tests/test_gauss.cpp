#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace gaugework;
using Catch::Approx;

namespace {

/// Joint kernel from sum_x G(x)^2, solved densely in one piece.
Index reference_kernel_dim(const std::vector<SparseMatrix>& generators, Index dim) {
  DenseMatrix m = DenseMatrix::Zero(dim, dim);
  for (const auto& g : generators) m += to_dense(SparseMatrix(g * g));
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(m);
  Index count = 0;
  for (Index i = 0; i < dim; ++i) count += es.eigenvalues()(i) <= 1e-8 ? 1 : 0;
  return count;
}

}  // namespace

TEST_CASE("Gauss generators commute", "[gauss]") {
  const auto m = gw_test::make_model(gw_test::chain(3, 3));
  const GaussSet g = build_gauss(m.fields);
  CHECK(generator_commutator_defect(g) <= 1e-12);
}

TEST_CASE("physical projector matches an independent kernel count", "[gauss]") {
  for (const auto& c : {gw_test::chain(2, 2), gw_test::chain(2, 3), gw_test::chain(3, 2), gw_test::chain(2, 2, 0.5)}) {
    const auto m = gw_test::make_model(c);
    const GaussSet g = build_gauss(m.fields);
    CHECK(g.physical_dim == reference_kernel_dim(g.generators, m.fields.space.total_dim));
    CHECK(projector_idempotence_defect(g) <= 1e-10);
    const DenseMatrix& p = g.physical_projector;
    CHECK(max_abs(DenseMatrix(p - p.adjoint())) <= 1e-12);
    for (const auto& gx : g.generators) CHECK(op_norm(DenseMatrix(gx * g.basis)) <= 1e-8);
  }
}

TEST_CASE("empty kernel is reported with the nearest eigenvalues", "[gauss]") {
  // Charge 0.5 with E eigenvalues of a two-level ladder never cancels.
  const auto m = gw_test::make_model(gw_test::chain(2, 2, 0.37));
  const GaussSet g = build_gauss(m.fields);
  if (g.physical_dim == 0) {
    CHECK_FALSE(g.nearest_eigenvalues.empty());
    CHECK(compatibility_defect(DenseMatrix::Identity(64, 64), g) == 0.0);
  } else {
    CHECK(g.nearest_eigenvalues.empty());
  }
}

TEST_CASE("compatibility of simple unitaries", "[gauss]") {
  const auto m = gw_test::make_model(gw_test::chain(2, 3));
  const FieldSet& f = m.fields;
  const GaussSet g = build_gauss(f);
  REQUIRE(g.physical_dim > 0);
  const Index dim = f.space.total_dim;
  CHECK(compatibility_defect(DenseMatrix::Identity(dim, dim), g) <= 1e-12);

  // exp(i E_l) is a function of the generators' building blocks and commutes with G.
  const DenseMatrix e0 = to_dense(f.e_field[0]);
  CHECK(compatibility_defect(gw_test::reference_exp_i(e0, 1.0), g) <= 1e-8);
  // exp(i A_l) shifts E_l and leaves the kernel.
  const DenseMatrix a0 = to_dense(f.a_field[0]);
  CHECK(compatibility_defect(gw_test::reference_exp_i(a0, 1.0), g) > 0.1);
}

TEST_CASE("commutant projection preserves the physical subspace", "[gauss]") {
  const auto m = gw_test::make_model(gw_test::chain(2, 2));
  const GaussSet g = build_gauss(m.fields);
  const DenseMatrix h = gw_test::random_hermitian(64, 7);
  const DenseMatrix k = commutant_project(h, g);
  CHECK(max_abs(DenseMatrix(k - k.adjoint())) <= 1e-12);
  CHECK(op_norm(DenseMatrix(k * g.physical_projector - g.physical_projector * k)) <= 1e-10);
  const DenseMatrix u = gw_test::reference_exp_i(k, 0.9);
  CHECK(compatibility_defect(u, g) <= 1e-8);
  // Projecting twice changes nothing.
  CHECK(max_abs(DenseMatrix(commutant_project(k, g) - k)) <= 1e-12);
}

TEST_CASE("unitary compatibility check rejects non-unitaries", "[gauss]") {
  const auto m = gw_test::make_model(gw_test::chain(2, 2));
  const GaussSet g = build_gauss(m.fields);
  CHECK_THROWS_AS(check_unitary_compatibility(QOperator(DenseMatrix(2.0 * DenseMatrix::Identity(64, 64))), g),
                  std::invalid_argument);
  CHECK(check_unitary_compatibility(QOperator(DenseMatrix::Identity(64, 64)), g) <= 1e-12);
}

TEST_CASE("build_gauss respects dense_cap", "[gauss]") {
  LatticeConfig c = gw_test::chain(2, 2);
  c.dense_cap = 32;
  const auto m = gw_test::make_model(c);
  CHECK_THROWS_AS(build_gauss(m.fields), CapExceeded);
}
