#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace gaugework;
using Catch::Approx;

namespace {

struct Setup {
  gw_test::Model model;
  GaussSet gauss;
  ThermalState state;
  Kick kick;

  Setup(const LatticeConfig& c, double beta, KickSpec spec)
      : model(gw_test::make_model(c)),
        gauss(build_gauss(model.fields)),
        state(gibbs_state(model.hamiltonian.total, beta)),
        kick(build_kick(spec, gauss, model.fields)) {}

  KickContext context() const {
    return KickContext(model.fields, model.hamiltonian, gauss, state, kick.unitary);
  }
};

KickSpec local_kick(std::uint64_t seed, double strength = 0.3) {
  KickSpec s;
  s.kind = KickKind::local_potential;
  s.strength = strength;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("kick kinds round-trip through their names", "[counterexample]") {
  for (auto k : {KickKind::hopping_quench, KickKind::local_potential, KickKind::random_commutant}) {
    CHECK(parse_kick_kind(to_string(k)) == k);
  }
  CHECK_FALSE(parse_kick_kind("nonsense").has_value());
}

TEST_CASE("every kick kind is unitary and Gauss compatible", "[counterexample]") {
  const auto model = gw_test::make_model(gw_test::chain(3, 2));
  const GaussSet gauss = build_gauss(model.fields);
  for (auto kind : {KickKind::hopping_quench, KickKind::local_potential, KickKind::random_commutant}) {
    for (std::uint64_t seed : {1u, 2u}) {
      KickSpec spec;
      spec.kind = kind;
      spec.seed = seed;
      const Kick k = build_kick(spec, gauss, model.fields);
      CHECK(k.unitary.unitary());
      CHECK(k.gauss_defect <= 1e-8);
    }
  }
  // The local potential commutes with every G(x) as built; the others are projected.
  CHECK_FALSE(build_kick(local_kick(1), gauss, model.fields).projected);
  KickSpec random;
  random.kind = KickKind::random_commutant;
  CHECK(build_kick(random, gauss, model.fields).projected);
}

TEST_CASE("kicks are deterministic in the seed", "[counterexample]") {
  const auto model = gw_test::make_model(gw_test::chain(2, 2));
  const GaussSet gauss = build_gauss(model.fields);
  const Kick a = build_kick(local_kick(5), gauss, model.fields);
  const Kick b = build_kick(local_kick(5), gauss, model.fields);
  const Kick c = build_kick(local_kick(6), gauss, model.fields);
  CHECK(max_abs(DenseMatrix(a.unitary.matrix() - b.unitary.matrix())) == 0.0);
  CHECK(max_abs(DenseMatrix(a.unitary.matrix() - c.unitary.matrix())) > 1e-3);
  KickSpec idle = local_kick(5, 0.0);
  CHECK(build_kick(idle, gauss, model.fields).unitary.identity());
}

TEST_CASE("chi = 0 gives R = I and V = U", "[counterexample]") {
  const Setup s(gw_test::chain(3, 2), 1.0, local_kick(1));
  const ChiField zero{std::vector<double>(3, 0.0)};
  const Rotation rot = rotate(s.kick.unitary, c_operator(zero, s.model.fields));
  CHECK(rot.r.identity());
  CHECK(max_abs(DenseMatrix(rot.v.matrix() - s.kick.unitary.matrix())) == 0.0);
  const DefectReport rep = identity_suite(s.context(), zero);
  for (const auto& [name, r] : rep.entries()) {
    INFO(name);
    CHECK(r.op <= 1e-10);
  }
}

TEST_CASE("both constructions of R agree and V stays physical", "[counterexample]") {
  const Setup s(gw_test::chain(3, 2), 1.0, local_kick(2));
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const ChiField chi = gw_test::random_chi(s.model.fields.space, seed);
    const SparseMatrix c = c_operator(chi, s.model.fields);
    const Rotation rot = rotate(s.kick.unitary, c);
    CHECK(rot.cross_defect <= 1e-10);
    for (const auto& g : s.gauss.generators) CHECK(op_norm(commutator(c, g)) <= 1e-9);
    CHECK(compatibility_defect(rot.v.matrix(), s.gauss) <= s.kick.gauss_defect + 1e-8);
  }
  CHECK_THROWS_AS(rotate(QOperator(DenseMatrix(2.0 * DenseMatrix::Identity(512, 512))), SparseMatrix(512, 512)),
                  std::invalid_argument);
}

TEST_CASE("fermionic commutators with C vanish", "[counterexample]") {
  const Setup s(gw_test::chain(3, 2), 1.0, local_kick(1));
  const DefectReport rep = identity_suite(s.context(), gw_test::random_chi(s.model.fields.space, 4));
  CHECK(rep.eq18_hd.op <= 1e-12);
  CHECK(rep.eq18_j.op <= 1e-12);
  CHECK(rep.eq18_rho.op <= 1e-12);
  CHECK(rep.eq22.op <= 1e-12);
  CHECK(rep.eq24.op <= 1e-12);
}

TEST_CASE("[A, C] residual is exactly the edge term", "[counterexample]") {
  // [A_l, C] + i g_l = i n_max g_l P_top(l): op norm n_max |g_l|, thermal weight
  // |g_l| n_max sqrt(tr[rho P_top(l)]).
  for (int n : {2, 3, 4}) {
    const Setup s(gw_test::chain(2, n), 1.0, local_kick(1));
    const KickContext ctx = s.context();
    const ChiField chi = gw_test::random_chi(s.model.fields.space, 8);
    const auto grad = lattice_grad(s.model.fields.space, chi.values);
    const DefectReport rep = identity_suite(ctx, chi);
    double op = 0.0, thermal = 0.0;
    const auto edge = edge_population(s.model.fields, s.state.rho.matrix());
    for (std::size_t l = 0; l < grad.size(); ++l) {
      op = std::max(op, n * std::abs(grad[l]));
      thermal = std::max(thermal, n * std::abs(grad[l]) * std::sqrt(edge[l]));
    }
    CHECK(rep.eq19.op == Approx(op).epsilon(1e-10));
    CHECK(rep.eq19.thermal == Approx(thermal).epsilon(1e-10));
  }
}

TEST_CASE("kick frame and explicit products agree", "[counterexample]") {
  const Setup s(gw_test::chain(3, 2), 1.0, local_kick(3));
  const KickContext ctx = s.context();
  const ChiField chi = gw_test::random_chi(s.model.fields.space, 2);
  const DefectReport fast = identity_suite(ctx, chi, Frame::kick);
  const DefectReport slow = identity_suite(ctx, chi, Frame::explicit_);
  const auto a = fast.entries();
  const auto b = slow.entries();
  for (std::size_t i = 0; i < a.size(); ++i) {
    INFO(a[i].first);
    CHECK(a[i].second.op == Approx(b[i].second.op).margin(1e-10));
    CHECK(a[i].second.thermal == Approx(b[i].second.thermal).margin(1e-10));
  }
}

TEST_CASE("the shift sign of V^dagger A V is plus", "[counterexample]") {
  // Away from the edge the first-order shift of V^dagger A V is exactly U^dagger (A + grad chi) U.
  const Setup s(gw_test::chain(2, 4), 1.0, local_kick(1));
  const KickContext ctx = s.context();
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const DefectReport rep = identity_suite(ctx, gw_test::random_chi(s.model.fields.space, seed));
    CHECK(rep.eq30_sign == +1);
    CHECK(rep.eq30_interior_plus <= 1e-12);
    CHECK(rep.eq30_interior_minus == Approx(2.0).margin(1e-12));
  }
}

TEST_CASE("budgeted residuals stay below the published budget", "[counterexample]") {
  for (int n : {2, 4, 8}) {
    const Setup s(gw_test::chain(2, n), 1.0, local_kick(1));
    const KickContext ctx = s.context();
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const DefectReport rep = identity_suite(ctx, gw_test::random_chi(s.model.fields.space, seed));
      INFO("n_max " << n << " seed " << seed);
      CHECK(rep.max_budgeted() <= rep.budget);
    }
  }
}

TEST_CASE("averaged current of the equilibrium state", "[counterexample]") {
  const auto model = gw_test::make_model(gw_test::chain(3, 2));
  const ThermalState st = gibbs_state(model.hamiltonian.total, 1.0);
  const QOperator id(DenseMatrix::Identity(512, 512), QOperator::kUnitary | QOperator::kIdentity);
  const CurrentProfile p = j_average(id, st, model.fields);
  CHECK(p.max_imaginary <= 1e-10);
  for (double d : p.divergence) CHECK(std::abs(d) <= 1e-8);

  const auto neutral = gw_test::make_model(gw_test::chain(3, 2, 0.0));
  const ThermalState st0 = gibbs_state(neutral.hamiltonian.total, 1.0);
  for (double j : j_average(id, st0, neutral.fields).link) CHECK(std::abs(j) <= 1e-12);
}

TEST_CASE("a local potential kick drives a divergent current on three sites", "[counterexample]") {
  const Setup s(gw_test::chain(3, 2), 1.0, local_kick(1));
  const CurrentProfile p = s.context().currents;
  double sum_sq = 0.0;
  for (double d : p.divergence) sum_sq += d * d;
  CHECK(sum_sq > 1e-6);
  CHECK(p.max_imaginary <= 1e-10);
}

TEST_CASE("optimal chi", "[counterexample]") {
  const std::vector<double> div{0.3, -0.1, -0.2};
  const OptimalChi zero = optimal_chi(div, 0.0);
  for (double v : zero.chi.values) CHECK(v == 0.0);
  CHECK(zero.predicted_term == 0.0);

  const std::vector<double> flat{0.0, 0.0, 0.0};
  for (double v : optimal_chi(flat, 7.0).chi.values) CHECK(v == 0.0);

  const OptimalChi one = optimal_chi(div, 1.5);
  const OptimalChi two = optimal_chi(div, 3.0);
  CHECK(two.predicted_term == 2.0 * one.predicted_term);
  CHECK(one.predicted_term == Approx(-1.5 * (0.09 + 0.01 + 0.04)).epsilon(1e-15));
  CHECK(one.chi.values[0] == Approx(-0.45));
}

TEST_CASE("work pipeline on the three-site chain", "[counterexample]") {
  const Setup s(gw_test::chain(3, 2), 1.0, local_kick(2));
  const KickContext ctx = s.context();
  const std::vector<double> grid{0.0, 0.5, 2.0, 20.0};
  const auto reports = work_pipeline(ctx, grid);
  REQUIRE(reports.size() == grid.size());
  CHECK(std::abs(reports[0].w_direct - reports[0].w0) <= 1e-10);
  double sum_sq = 0.0;
  for (double d : ctx.currents.divergence) sum_sq += d * d;
  for (const auto& r : reports) {
    INFO("lambda " << r.lambda);
    CHECK(std::abs(r.w_pred33 - r.w_pred35) <= 1e-10);
    CHECK(std::abs(r.w_pred35 - r.w_pred37) <= 1e-12);
    CHECK(r.w_pred37 == Approx(r.w0 - r.lambda * sum_sq).margin(1e-12));
    CHECK(std::abs(r.w_direct - r.w_via_eq2) <= 1e-10);
    CHECK(r.w_direct >= r.oracle_bound - 1e-9);
    CHECK(std::abs(r.oracle_bound) <= 1e-10);
    CHECK(std::abs(r.gap()) <= r.defect_budget + 1e-10);
  }
  // The closed form goes negative at large lambda while the direct work does not.
  CHECK(reports.back().w_pred37 < 0.0);
  CHECK(reports.back().w_direct >= -1e-9);
  CHECK_THROWS_AS(work_pipeline(ctx, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("truncated BCH series converges to the exact conjugation", "[counterexample]") {
  const DenseMatrix h = gw_test::random_hermitian(8, 3);
  const DenseMatrix y = gw_test::random_hermitian(8, 4);
  const DenseMatrix x = (kI * 0.05) * h;
  const DenseMatrix u = gw_test::reference_exp_i(h, 0.05);
  const DenseMatrix exact = u * y * u.adjoint();
  double previous = std::numeric_limits<double>::infinity();
  for (int order : {1, 2, 4, 8, 16}) {
    const double err = max_abs(DenseMatrix(bch_series(x, y, order) - exact));
    CHECK(err < previous);
    previous = err;
  }
  CHECK(previous <= 1e-12);
}
