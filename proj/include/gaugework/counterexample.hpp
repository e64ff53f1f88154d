#pragma once

// The gauge-shifted interaction V = U R with R = exp(i U^dagger C U), C = sum_l E_l grad chi,
// the operator identities it relies on, and the work it does compared with the
// predicted closed form W0 - lambda sum (div J_U)^2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gaugework/fields.hpp"
#include "gaugework/gauss.hpp"
#include "gaugework/hamiltonian.hpp"
#include "gaugework/linalg.hpp"
#include "gaugework/model_space.hpp"
#include "gaugework/thermo.hpp"

namespace gaugework {

/// Real gauge function, one value per site.
struct ChiField {
  std::vector<double> values;
};

/// C = sum_l E_l (grad chi)_l.
inline SparseMatrix c_operator(const ChiField& chi, const FieldSet& f) {
  for (double v : chi.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("c_operator: chi must be finite");
  }
  const auto grad = lattice_grad(f.space, chi.values);
  SparseMatrix c(f.space.total_dim, f.space.total_dim);
  for (std::size_t l = 0; l < grad.size(); ++l) {
    if (grad[l] != 0.0) c += grad[l] * f.e_field[l];
  }
  return c;
}

/// exp(iC), kept sparse: C only acts on the boson factor.
inline SparseMatrix gauge_unitary(const SparseMatrix& c) {
  return HermitianSpectrum(c).apply_sparse([](double e) { return std::exp(kI * e); });
}

// ---------------------------------------------------------------------------
// Kicks

enum class KickKind { hopping_quench, local_potential, random_commutant };

inline std::string_view to_string(KickKind k) {
  switch (k) {
    case KickKind::hopping_quench: return "gauge-invariant-hopping-quench";
    case KickKind::local_potential: return "local-potential-quench";
    case KickKind::random_commutant: return "random-commutant-generator";
  }
  return "unknown";
}

inline std::optional<KickKind> parse_kick_kind(std::string_view s) {
  for (auto k : {KickKind::hopping_quench, KickKind::local_potential, KickKind::random_commutant}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

struct KickSpec {
  KickKind kind = KickKind::local_potential;
  double strength = 1.0;
  double duration = 1.0;
  std::uint64_t seed = 1;
};

struct Kick {
  KickSpec spec;
  QOperator unitary;
  double gauss_defect = 0.0;
  bool projected = false;  // generator was passed through commutant_project
};

class KickRejected : public std::runtime_error {
 public:
  explicit KickRejected(double defect)
      : std::runtime_error("kick rejected: Gauss compatibility defect " + std::to_string(defect)),
        defect_(defect) {}
  double defect() const { return defect_; }

 private:
  double defect_;
};

namespace detail {

// sum_{x,a} v_{x,a} n_{x,a}, v uniform in [-1, 1].
inline SparseMatrix local_potential_generator(const FieldSet& f, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  SparseMatrix k(f.space.total_dim, f.space.total_dim);
  for (const auto& site : f.psi) {
    for (const auto& psi : site) {
      const double v = dist(gen);
      k += v * SparseMatrix(SparseMatrix(psi.adjoint()) * psi);
    }
  }
  return k;
}

// sum_l w_l sum_a (psi^dagger_{tail,a} exp(-i q A_l) psi_{head,a} + h.c.), w uniform in [-1, 1].
inline SparseMatrix hopping_quench_generator(const FieldSet& f, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const DenseMatrix ladder = local::ladder_lowering(f.space.n_max);
  const DenseMatrix a_local = std::sqrt(0.5) * (ladder + ladder.adjoint());
  const double q = f.charge;
  const DenseMatrix link_phase =
      HermitianSpectrum(a_local).apply([q](double a) { return std::exp(-kI * (q * a)); });
  SparseMatrix k(f.space.total_dim, f.space.total_dim);
  for (int l = 0; l < f.space.links; ++l) {
    const double w = dist(gen);
    const SparseMatrix phase = embed(f.space, link_phase, Link{l});
    const auto& tail = f.psi[static_cast<std::size_t>(f.space.link_tail(l))];
    const auto& head = f.psi[static_cast<std::size_t>(f.space.link_head(l))];
    for (int a = 0; a < 2; ++a) {
      const SparseMatrix hop =
          SparseMatrix(tail[static_cast<std::size_t>(a)].adjoint()) * head[static_cast<std::size_t>(a)] * phase;
      k += w * SparseMatrix(hop + SparseMatrix(hop.adjoint()));
    }
  }
  return k;
}

// Hermitian matrix with Gaussian entries, scaled to unit operator norm.
inline DenseMatrix random_hermitian(Index dim, std::mt19937_64& gen) {
  std::normal_distribution<double> dist(0.0, 1.0);
  DenseMatrix m(dim, dim);
  for (Index j = 0; j < dim; ++j) {
    for (Index i = 0; i < dim; ++i) {
      const double re = dist(gen);
      const double im = dist(gen);
      m(i, j) = cplx(re, im);
    }
  }
  DenseMatrix h = 0.5 * (m + m.adjoint());
  return h / op_norm(h);
}

inline bool commutes_with_all(const SparseMatrix& k, const std::vector<SparseMatrix>& generators) {
  return std::all_of(generators.begin(), generators.end(),
                     [&](const SparseMatrix& g) { return max_abs(commutator(k, g)) == 0.0; });
}

}  // namespace detail

/// U = exp(-i tau s K). Generators that do not commute exactly with every G(x) are
/// replaced by their commutant projection, so U preserves the physical subspace.
inline Kick build_kick(const KickSpec& spec, const GaussSet& gauss, const FieldSet& f) {
  f.space.require_dense("kick unitary");
  Kick kick;
  kick.spec = spec;
  const Index dim = f.space.total_dim;
  const double angle = spec.strength * spec.duration;
  if (angle == 0.0) {
    kick.unitary = QOperator(DenseMatrix::Identity(dim, dim), QOperator::kUnitary | QOperator::kIdentity);
    kick.gauss_defect = compatibility_defect(kick.unitary.matrix(), gauss);
    return kick;
  }

  std::mt19937_64 gen(spec.seed);
  DenseMatrix u;
  auto evolve = [angle](double e) { return std::exp(-kI * (angle * e)); };
  if (spec.kind == KickKind::random_commutant) {
    const DenseMatrix projected = commutant_project(detail::random_hermitian(dim, gen), gauss);
    kick.projected = true;
    u = HermitianSpectrum(DenseMatrix(0.5 * (projected + projected.adjoint()))).apply(evolve);
  } else {
    const SparseMatrix k = spec.kind == KickKind::local_potential
                               ? detail::local_potential_generator(f, gen)
                               : detail::hopping_quench_generator(f, gen);
    if (detail::commutes_with_all(k, gauss.generators)) {
      u = HermitianSpectrum(k).apply(evolve);
    } else {
      const DenseMatrix projected = commutant_project(k, gauss);
      kick.projected = true;
      u = HermitianSpectrum(DenseMatrix(0.5 * (projected + projected.adjoint()))).apply(evolve);
    }
  }
  kick.unitary = QOperator(std::move(u), QOperator::kUnitary);
  if (!kick.unitary.unitary()) throw NumericFailure("build_kick: exponential is not unitary");
  kick.gauss_defect = compatibility_defect(kick.unitary.matrix(), gauss);
  if (kick.gauss_defect > tol::kick_reject) throw KickRejected(kick.gauss_defect);
  return kick;
}

// ---------------------------------------------------------------------------
// R and V

struct Rotation {
  SparseMatrix gauge;   // exp(iC)
  QOperator r;          // exp(i U^dagger C U)
  QOperator v;          // U R
  double cross_defect;  // ||exp(i U^dagger C U) - U^dagger exp(iC) U||
};

/// Builds R both as the exponential of U^dagger C U and as U^dagger exp(iC) U, and
/// requires them to agree within 1e-10.
inline Rotation rotate(const QOperator& u, const SparseMatrix& c) {
  require_unitary(u, "rotate");
  const DenseMatrix& um = u.matrix();
  const DenseMatrix x = um.adjoint() * (c * um);
  DenseMatrix r_direct =
      HermitianSpectrum(DenseMatrix(0.5 * (x + x.adjoint()))).apply([](double e) { return std::exp(kI * e); });
  Rotation rot;
  rot.gauge = gauge_unitary(c);
  const DenseMatrix r_shortcut = um.adjoint() * (rot.gauge * um);
  rot.cross_defect = defect(r_direct, r_shortcut);
  if (rot.cross_defect > 1e-10) {
    throw NumericFailure("rotate: exp(iU'CU) and U' exp(iC) U differ by " + std::to_string(rot.cross_defect));
  }
  DenseMatrix v = um * r_direct;
  rot.r = QOperator(std::move(r_direct), QOperator::kUnitary | QOperator::kIdentity);
  rot.v = QOperator(std::move(v), QOperator::kUnitary);
  if (!rot.v.unitary()) throw NumericFailure("rotate: V is not unitary");
  return rot;
}

inline QOperator r_operator(const QOperator& u, const ChiField& chi, const FieldSet& f) {
  return rotate(u, c_operator(chi, f)).r;
}

inline QOperator v_operator(const QOperator& u, const ChiField& chi, const FieldSet& f) {
  return rotate(u, c_operator(chi, f)).v;
}

// ---------------------------------------------------------------------------
// Averaged current and the optimal chi

struct CurrentProfile {
  std::vector<double> link;        // J_U(l) = tr[U^dagger J_l U rho]
  std::vector<double> divergence;  // lattice_div of link
  double max_imaginary = 0.0;
};

/// Currents in an already evolved state sigma = U rho U^dagger.
inline CurrentProfile current_profile(const DenseMatrix& evolved, const FieldSet& f) {
  CurrentProfile p;
  for (const auto& j : f.current) {
    const cplx t = trace_product(j, evolved);
    p.link.push_back(t.real());
    p.max_imaginary = std::max(p.max_imaginary, std::abs(t.imag()));
  }
  p.divergence = lattice_div(f.space, p.link);
  return p;
}

inline CurrentProfile j_average(const QOperator& u, const ThermalState& state, const FieldSet& f) {
  const DenseMatrix& um = u.matrix();
  return current_profile(um * state.rho.matrix() * um.adjoint(), f);
}

inline std::vector<double> div_j(const QOperator& u, const ThermalState& state, const FieldSet& f) {
  return j_average(u, state, f).divergence;
}

struct OptimalChi {
  ChiField chi;
  double predicted_term = 0.0;  // -lambda sum_x (div J_U)^2
};

/// chi(x) = -lambda div J_U(x).
inline OptimalChi optimal_chi(std::span<const double> divergence, double lambda) {
  OptimalChi out;
  out.chi.values.assign(divergence.size(), 0.0);
  if (lambda == 0.0) return out;
  double sum_sq = 0.0;
  for (std::size_t x = 0; x < divergence.size(); ++x) {
    out.chi.values[x] = divergence[x] == 0.0 ? 0.0 : -lambda * divergence[x];
    sum_sq += divergence[x] * divergence[x];
  }
  out.predicted_term = -lambda * sum_sq;
  return out;
}

inline OptimalChi optimal_chi(const QOperator& u, const ThermalState& state, const FieldSet& f,
                              double lambda) {
  return optimal_chi(div_j(u, state, f), lambda);
}

// ---------------------------------------------------------------------------
// Shared per-kick state

/// Everything fixed once the model, the initial state and U are chosen; reused for
/// every chi.
struct KickContext {
  KickContext(const FieldSet& f, const HamiltonianParts& h, const GaussSet& g, const ThermalState& s,
              const QOperator& u)
      : fields(f), hamiltonian(h), gauss(g), state(s), kick(u) {
    require_unitary(u, "KickContext");
    const DenseMatrix& um = u.matrix();
    evolved = um * s.rho.matrix() * um.adjoint();
    currents = current_profile(evolved, f);
    mean_energy = trace_product(h.total, s.rho.matrix()).real();
    w0 = work(u, h.total, s).value;
    for (double p : edge_population(f, s.rho.matrix())) edge_weight = std::max(edge_weight, p);
    for (const auto& j : f.current) current_norm = std::max(current_norm, op_norm(j));
    for (const auto& b : f.b_field) plaquette_norm = std::max(plaquette_norm, op_norm(b));
  }

  const FieldSet& fields;
  const HamiltonianParts& hamiltonian;
  const GaussSet& gauss;
  const ThermalState& state;
  const QOperator& kick;

  DenseMatrix evolved;  // U rho U^dagger
  CurrentProfile currents;
  double mean_energy = 0.0;
  double w0 = 0.0;
  double edge_weight = 0.0;  // max_l tr[rho P_top]
  double current_norm = 0.0;
  double plaquette_norm = 0.0;
};

/// Bound on every budgeted identity residual and on |W_direct - W_pred33|:
/// B = n_max ||grad chi||_1 max(1, max_l ||J_l|| + 2 max_p ||B_p||).
/// Each link's truncated shift exp(-i g E) A exp(i g E) - A - g equals
/// -n_max g times an average of rotated top-level projectors, so its norm is at most
/// n_max |g|; the current and plaquette factors carry that into the Hamiltonian.
inline double defect_budget(const KickContext& ctx, std::span<const double> grad) {
  double l1 = 0.0;
  for (double g : grad) l1 += std::abs(g);
  const double kappa = std::max(1.0, ctx.current_norm + 2.0 * ctx.plaquette_norm);
  return static_cast<double>(ctx.fields.space.n_max) * l1 * kappa;
}

// ---------------------------------------------------------------------------
// Identity suite

struct IdentityResidual {
  double op = 0.0;       // operator norm
  double thermal = 0.0;  // sqrt(tr[rho R^dagger R]) for the laboratory-frame residual R
};

struct DefectReport {
  IdentityResidual eq18_hd, eq18_j, eq18_rho;
  IdentityResidual eq19, eq20, eq21, eq22, eq24;
  IdentityResidual eq27, eq29, eq30, eq31, eq32;
  IdentityResidual eq30_plus, eq30_minus;
  // Which sign the conjugation produces: max_l op_norm(Q_l (i[A_l, C] -+ grad chi_l) Q_l) with
  // Q_l = I - P_top(l). Away from the edge the first-order shift is free of truncation.
  double eq30_interior_plus = 0.0, eq30_interior_minus = 0.0;
  int eq30_sign = +1;  // +1: V'AV = U'(A + grad chi)U; -1: U'(A - grad chi)U
  double ccr_budget = 0.0;  // max_l tr[rho P_top]
  double budget = 0.0;      // defect_budget for this chi
  int num_sites = 0;
  int n_max = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;

  std::vector<std::pair<std::string_view, IdentityResidual>> entries() const {
    return {{"eq18_hd", eq18_hd}, {"eq18_j", eq18_j},   {"eq18_rho", eq18_rho}, {"eq19", eq19},
            {"eq20", eq20},       {"eq21", eq21},       {"eq22", eq22},         {"eq24", eq24},
            {"eq27", eq27},       {"eq29", eq29},       {"eq30", eq30},         {"eq30_plus", eq30_plus},
            {"eq30_minus", eq30_minus}, {"eq31", eq31}, {"eq32", eq32}};
  }

  /// Largest operator-norm residual over all identities, with eq30 at its matching sign.
  double max_residual() const {
    double worst = 0.0;
    for (const auto& [name, r] : entries()) {
      if (name != "eq30_plus" && name != "eq30_minus") worst = std::max(worst, r.op);
    }
    return worst;
  }

  /// Largest operator-norm residual among the truncation-budgeted identities.
  double max_budgeted() const {
    return std::max({eq19.op, eq21.op, eq27.op, eq29.op, eq30.op, eq31.op, eq32.op});
  }
};

enum class Frame {
  kick,      // residuals V'XV - U'YU evaluated as exp(-iC) X exp(iC) - Y (unitary invariance)
  explicit_  // dense products with V and U
};

namespace detail {

inline IdentityResidual measure(const SparseMatrix& r, const DenseMatrix& weight) {
  return {op_norm(r), weighted_norm(r, weight)};
}

inline IdentityResidual measure(const DenseMatrix& r, const DenseMatrix& weight) {
  return {op_norm(r), weighted_norm(r, weight)};
}

inline void keep_max(IdentityResidual& into, const IdentityResidual& r) {
  into.op = std::max(into.op, r.op);
  into.thermal = std::max(into.thermal, r.thermal);
}

}  // namespace detail

/// Residual of every identity in the derivation chain for one chi.
inline DefectReport identity_suite(const KickContext& ctx, const ChiField& chi, Frame frame = Frame::kick) {
  const FieldSet& f = ctx.fields;
  const HamiltonianParts& h = ctx.hamiltonian;
  const DenseMatrix& rho = ctx.state.rho.matrix();
  const DenseMatrix& um = ctx.kick.matrix();
  const Index dim = f.space.total_dim;
  const SparseMatrix id = sparse_identity(dim);
  const auto grad = lattice_grad(f.space, chi.values);
  const SparseMatrix c = c_operator(chi, f);

  DefectReport rep;
  rep.num_sites = f.space.num_sites;
  rep.n_max = f.space.n_max;
  rep.ccr_budget = ctx.edge_weight;
  rep.budget = defect_budget(ctx, grad);

  // Commutators with C (no conjugation).
  rep.eq18_hd = detail::measure(commutator(h.dirac, c), rho);
  for (const auto& j : f.current) detail::keep_max(rep.eq18_j, detail::measure(commutator(j, c), rho));
  for (const auto& q : f.charge_density) {
    detail::keep_max(rep.eq18_rho, detail::measure(commutator(q, c), rho));
  }
  for (std::size_t l = 0; l < grad.size(); ++l) {
    SparseMatrix r = commutator(f.a_field[l], c);
    r += (kI * grad[l]) * id;
    detail::keep_max(rep.eq19, detail::measure(r, rho));
    const SparseMatrix below = id - f.top_projector[l];
    const SparseMatrix shift = (kI * commutator(f.a_field[l], c)).eval();
    rep.eq30_interior_plus =
        std::max(rep.eq30_interior_plus, op_norm(SparseMatrix(below * SparseMatrix(shift - grad[l] * id) * below)));
    rep.eq30_interior_minus =
        std::max(rep.eq30_interior_minus, op_norm(SparseMatrix(below * SparseMatrix(shift + grad[l] * id) * below)));
  }
  for (const auto& b : f.b_field) detail::keep_max(rep.eq20, detail::measure(commutator(b, c), rho));
  rep.eq21 = detail::measure(commutator(h.maxwell, c), rho);
  for (const auto& g : ctx.gauss.generators) {
    detail::keep_max(rep.eq22, detail::measure(commutator(g, c), rho));
  }

  SparseMatrix shift_sum(dim, dim);  // sum_l J_l grad_l
  for (std::size_t l = 0; l < grad.size(); ++l) shift_sum += grad[l] * f.current[l];
  const SparseMatrix free_part = h.dirac + h.maxwell;

  if (frame == Frame::kick) {
    const SparseMatrix w = gauge_unitary(c);
    const SparseMatrix wd = w.adjoint();
    auto conj = [&](const SparseMatrix& x) { return SparseMatrix(wd * x * w); };
    const DenseMatrix& sigma = ctx.evolved;

    // [U'GU, U'CU] = U'[G, C]U.
    for (const auto& g : ctx.gauss.generators) {
      detail::keep_max(rep.eq24, detail::measure(commutator(g, c), sigma));
    }
    rep.eq27 = detail::measure(SparseMatrix(conj(free_part) - free_part), sigma);
    std::vector<SparseMatrix> shifted_a;
    for (std::size_t l = 0; l < grad.size(); ++l) {
      detail::keep_max(rep.eq29, detail::measure(SparseMatrix(conj(f.current[l]) - f.current[l]), sigma));
      shifted_a.push_back(conj(f.a_field[l]));
      detail::keep_max(rep.eq30_plus,
                       detail::measure(SparseMatrix(shifted_a[l] - f.a_field[l] - grad[l] * id), sigma));
      detail::keep_max(rep.eq30_minus,
                       detail::measure(SparseMatrix(shifted_a[l] - f.a_field[l] + grad[l] * id), sigma));
    }
    rep.eq30_sign = rep.eq30_interior_plus <= rep.eq30_interior_minus ? +1 : -1;
    rep.eq30 = rep.eq30_sign > 0 ? rep.eq30_plus : rep.eq30_minus;
    const double s = rep.eq30_sign;
    for (std::size_t l = 0; l < grad.size(); ++l) {
      const SparseMatrix product = f.current[l] * f.a_field[l];
      const SparseMatrix expected = f.current[l] * SparseMatrix(f.a_field[l] + (s * grad[l]) * id);
      detail::keep_max(rep.eq31, detail::measure(SparseMatrix(conj(product) - expected), sigma));
    }
    rep.eq32 = detail::measure(SparseMatrix(conj(h.total) - (h.total - shift_sum)), sigma);
    return rep;
  }

  // Explicit products: V'XV - U'YU with dense V = U R.
  const Rotation rot = rotate(ctx.kick, c);
  const DenseMatrix& vm = rot.v.matrix();
  auto by_v = [&](const SparseMatrix& x) { return DenseMatrix(vm.adjoint() * (x * vm)); };
  auto by_u = [&](const SparseMatrix& x) { return DenseMatrix(um.adjoint() * (x * um)); };

  {
    const DenseMatrix kicked_c = by_u(c);
    for (const auto& g : ctx.gauss.generators) {
      detail::keep_max(rep.eq24, detail::measure(commutator(by_u(g), kicked_c), rho));
    }
  }

  rep.eq27 = detail::measure(DenseMatrix(by_v(free_part) - by_u(free_part)), rho);
  const DenseMatrix dense_id = DenseMatrix::Identity(dim, dim);
  for (std::size_t l = 0; l < grad.size(); ++l) {
    detail::keep_max(rep.eq29, detail::measure(DenseMatrix(by_v(f.current[l]) - by_u(f.current[l])), rho));
    const DenseMatrix va = by_v(f.a_field[l]);
    const DenseMatrix ua = by_u(f.a_field[l]);
    detail::keep_max(rep.eq30_plus, detail::measure(DenseMatrix(va - ua - grad[l] * dense_id), rho));
    detail::keep_max(rep.eq30_minus, detail::measure(DenseMatrix(va - ua + grad[l] * dense_id), rho));
  }
  rep.eq30_sign = rep.eq30_interior_plus <= rep.eq30_interior_minus ? +1 : -1;
  rep.eq30 = rep.eq30_sign > 0 ? rep.eq30_plus : rep.eq30_minus;
  const double s = rep.eq30_sign;
  for (std::size_t l = 0; l < grad.size(); ++l) {
    const SparseMatrix product = f.current[l] * f.a_field[l];
    const SparseMatrix expected = f.current[l] * SparseMatrix(f.a_field[l] + (s * grad[l]) * id);
    detail::keep_max(rep.eq31, detail::measure(DenseMatrix(by_v(product) - by_u(expected)), rho));
  }
  rep.eq32 = detail::measure(DenseMatrix(by_v(h.total) - by_u(SparseMatrix(h.total - shift_sum))), rho);
  return rep;
}

/// Order-k truncation of exp(X) Y exp(-X) = Y + [X,Y] + [X,[X,Y]]/2! + ...
inline DenseMatrix bch_series(const DenseMatrix& x, const DenseMatrix& y, int order) {
  DenseMatrix term = y;
  DenseMatrix sum = y;
  for (int k = 1; k <= order; ++k) {
    term = commutator(x, term) / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Work

struct WorkReport {
  double lambda = 0.0;
  double w_direct = 0.0;   // tr[V'H V rho] - tr[H rho]
  double w_via_eq2 = 0.0;  // tr[H V rho V'] - tr[H rho]
  double w0 = 0.0;         // same with U alone
  double w_pred33 = 0.0;   // W0 - sum_l J_U(l) grad chi(l)
  double w_pred35 = 0.0;   // W0 + sum_x chi(x) div J_U(x)
  double w_pred37 = 0.0;   // W0 - lambda sum_x (div J_U(x))^2
  double predicted_w = 0.0;
  double oracle_bound = 0.0;
  double defect_budget = 0.0;
  double cross_defect = 0.0;
  double sum_div_sq = 0.0;

  double gap() const { return w_direct - w_pred33; }
};

struct PointResult {
  WorkReport work;
  std::optional<DefectReport> defects;
  double gauss_defect_u = 0.0;
  double gauss_defect_v = 0.0;
};

/// One lambda: chi from optimal_chi, V from rotate, and every work estimate.
/// Throws NumericFailure if the three predicted forms disagree by more than 1e-10.
inline PointResult evaluate_point(const KickContext& ctx, double lambda, double oracle_bound,
                                  bool with_identities) {
  const FieldSet& f = ctx.fields;
  const auto& div = ctx.currents.divergence;
  const OptimalChi opt = optimal_chi(div, lambda);
  const auto grad = lattice_grad(f.space, opt.chi.values);
  const SparseMatrix c = c_operator(opt.chi, f);
  const Rotation rot = rotate(ctx.kick, c);
  const WorkValue wv = work(rot.v, ctx.hamiltonian.total, ctx.state);

  PointResult out;
  WorkReport& w = out.work;
  w.lambda = lambda;
  w.w_direct = wv.value;
  w.w_via_eq2 = wv.eq2;
  w.w0 = ctx.w0;
  double flux = 0.0;
  for (std::size_t l = 0; l < grad.size(); ++l) flux += ctx.currents.link[l] * grad[l];
  w.w_pred33 = ctx.w0 - flux;
  double source = 0.0;
  for (std::size_t x = 0; x < div.size(); ++x) {
    source += opt.chi.values[x] * div[x];
    w.sum_div_sq += div[x] * div[x];
  }
  w.w_pred35 = ctx.w0 + source;
  w.w_pred37 = ctx.w0 + opt.predicted_term;
  w.predicted_w = w.w_pred37;
  w.oracle_bound = oracle_bound;
  w.defect_budget = defect_budget(ctx, grad);
  w.cross_defect = rot.cross_defect;
  if (std::abs(w.w_pred33 - w.w_pred35) > 1e-10 || std::abs(w.w_pred35 - w.w_pred37) > 1e-10) {
    throw NumericFailure("evaluate_point: predicted work forms disagree");
  }

  out.gauss_defect_u = compatibility_defect(ctx.kick.matrix(), ctx.gauss);
  out.gauss_defect_v = compatibility_defect(rot.v.matrix(), ctx.gauss);
  if (with_identities) {
    out.defects = identity_suite(ctx, opt.chi);
    out.defects->lambda = lambda;
  }
  return out;
}

inline std::vector<WorkReport> work_pipeline(const KickContext& ctx, std::span<const double> lambda_grid) {
  if (lambda_grid.empty()) throw std::invalid_argument("work_pipeline: empty lambda grid");
  const double oracle = min_work_oracle(ctx.hamiltonian.total, ctx.state);
  std::vector<WorkReport> out;
  for (double lambda : lambda_grid) out.push_back(evaluate_point(ctx, lambda, oracle, false).work);
  return out;
}

}  // namespace gaugework
