#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace gaugework;
using Catch::Approx;

TEST_CASE("Hamiltonian parts are hermitian", "[hamiltonian]") {
  for (const auto& c : {gw_test::chain(2, 2), gw_test::chain(3, 2, 1.0, 0.5), gw_test::chain(2, 4, 0.7)}) {
    const auto m = gw_test::make_model(c);
    CHECK(m.hamiltonian.hermiticity_defect <= 1e-12);
  }
}

TEST_CASE("coupling vanishes at zero charge", "[hamiltonian]") {
  const auto m = gw_test::make_model(gw_test::chain(2, 2, 0.0));
  CHECK(max_abs(m.hamiltonian.coupling) == 0.0);
  // Without coupling every piece commutes with the Gauss generators.
  CHECK(m.hamiltonian.gauss_defect <= 1e-12);
}

TEST_CASE("Gauss violation of H0 at n_max 2 lives on the truncation edge", "[hamiltonian]") {
  // [J A, G] = [J, G] A - i J (I - n_max P_top); A has no diagonal at level 0, so between
  // states with every link at level 0 only the edge term survives, and it cancels there.
  const auto m = gw_test::make_model(gw_test::chain(3, 2));
  CHECK(m.hamiltonian.gauss_defect > 0.1);
  const FieldSet& f = m.fields;
  const SparseMatrix id = sparse_identity(f.space.total_dim);
  SparseMatrix below = id;
  for (const auto& p : f.top_projector) below = SparseMatrix(below * SparseMatrix(id - p));
  for (const auto& g : gauss_generators(f)) {
    const SparseMatrix c = commutator(m.hamiltonian.total, g);
    CHECK(op_norm(SparseMatrix(below * c * below)) <= 1e-12);
  }
}

TEST_CASE("Gauss violation of H0 grows with the ladder", "[hamiltonian]") {
  // The linear coupling is gauge invariant only to first order, so the defect is not edge-local.
  double previous = 0.0;
  for (int n : {2, 3, 4}) {
    const auto m = gw_test::make_model(gw_test::chain(3, n));
    CHECK(m.hamiltonian.gauss_defect > previous);
    previous = m.hamiltonian.gauss_defect;
  }
}

TEST_CASE("Dirac part conserves fermion number", "[hamiltonian]") {
  const auto m = gw_test::make_model(gw_test::chain(3, 2, 1.0, 0.8));
  SparseMatrix total_charge(m.fields.space.total_dim, m.fields.space.total_dim);
  for (const auto& q : m.fields.charge_density) total_charge += q;
  CHECK(op_norm(commutator(m.hamiltonian.dirac, total_charge)) <= 1e-12);
  CHECK(op_norm(commutator(m.hamiltonian.total, total_charge)) <= 1e-12);
}

TEST_CASE("Maxwell part is a sum of single-link terms", "[hamiltonian]") {
  const auto m = gw_test::make_model(gw_test::chain(2, 3));
  const DenseMatrix a = local::ladder_lowering(3);
  const DenseMatrix e = (kI * std::sqrt(0.5)) * (a - a.adjoint());
  const DenseMatrix e2 = 0.5 * e * e;
  SparseMatrix expected = embed(m.fields.space, e2, Link{0}) + embed(m.fields.space, e2, Link{1});
  CHECK(max_abs(SparseMatrix(m.hamiltonian.maxwell - expected)) <= 1e-15);
}

TEST_CASE("hopping is built from psi^dagger alpha psi on each link", "[hamiltonian]") {
  const auto m = gw_test::make_model(gw_test::chain(3, 2));
  const FieldSet& f = m.fields;
  SparseMatrix expected(f.space.total_dim, f.space.total_dim);
  for (int l = 0; l < f.space.links; ++l) {
    SparseMatrix h(f.space.total_dim, f.space.total_dim);
    const auto& tail = f.psi[static_cast<std::size_t>(f.space.link_tail(l))];
    const auto& head = f.psi[static_cast<std::size_t>(f.space.link_head(l))];
    // alpha_x = sigma_x pairs spinor components crosswise.
    h += SparseMatrix(SparseMatrix(tail[0].adjoint()) * head[1]);
    h += SparseMatrix(SparseMatrix(tail[1].adjoint()) * head[0]);
    expected += (-0.5 * kI) * SparseMatrix(h - SparseMatrix(h.adjoint()));
  }
  CHECK(max_abs(SparseMatrix(build_h_hopping(f) - expected)) <= 1e-15);
}
