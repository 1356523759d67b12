#include <bit>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "dqpinn/dqme/basis.hpp"
#include "dqpinn/dqme/convention.hpp"
#include "dqpinn/dqme/liouvillian.hpp"
#include "dqpinn/dqme/observables.hpp"
#include "dqpinn/problem.hpp"

using namespace dqpinn;
using namespace dqpinn::dqme;

namespace {

Eigen::VectorXcd random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Eigen::VectorXcd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = cplx(d(rng), d(rng));
  return v;
}

// Spin-resolved charge N_u(n) - N_u(n') + M-_u - M+_u for every spin-orbital u.
bool charge_neutral(const Layout& l, const std::vector<DissipatonLevel>& levels, std::uint64_t s) {
  for (int u = 0; u < l.ns; ++u) {
    int q = static_cast<int>(bit(s, l.n_pos(u))) - static_cast<int>(bit(s, l.np_pos(u)));
    for (int j = 0; j < l.ne; ++j) {
      if (levels[j].orbital != u) continue;
      q += static_cast<int>(bit(s, l.m_pos(-1, j))) - static_cast<int>(bit(s, l.m_pos(+1, j)));
    }
    if (q != 0) return false;
  }
  return true;
}

ProblemSpec anderson_with_pade(int n_pade) {
  ProblemSpec p = anderson_defaults(3.0);
  p.bath.pade_order = n_pade;
  return p;
}

}  // namespace

TEST(Basis, CountsAndOrdering) {
  EXPECT_EQ(enumerate_basis(1, 1, 1).size(), 12u);
  EXPECT_EQ(enumerate_basis(1, 2, 4).size(), 64u);
  EXPECT_EQ(enumerate_basis(2, 2, 9).size(), 256u);
  const auto b = enumerate_basis(2, 3, 2);
  EXPECT_EQ(b.state(0), 0u);
  for (std::size_t i = 1; i < b.size(); ++i)
    EXPECT_LT(lex_key(b.layout(), b.state(i - 1)), lex_key(b.layout(), b.state(i)));
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_LE(tier(b.layout(), b.state(i)), 2);
}

TEST(Basis, CapacityError) { EXPECT_THROW(enumerate_basis(2, 12, 4, 1000), CapacityError); }

TEST(Basis, LexicographicMostSignificantFirst) {
  // n_1 = 1 with everything else empty sorts after every state with n_1 = 0.
  const auto b = enumerate_basis(1, 1, 2);
  const Layout& l = b.layout();
  const std::uint64_t n1 = std::uint64_t{1} << l.n_pos(0);
  EXPECT_EQ(*b.find(n1), b.size() / 2);
}

TEST(Basis, BlockSwapPartner) {
  const Layout l{2, 3};
  const std::uint64_t s = 0b01u | (0b10u << 2);  // n = (1,0), n' = (0,1)
  const auto p = block_swap_partner(l, s);
  EXPECT_EQ(n_bits(l, p.state), 0b10u);
  EXPECT_EQ(np_bits(l, p.state), 0b01u);
  EXPECT_EQ(p.phase, 1.0);

  const std::uint64_t two_minus = (std::uint64_t{1} << l.m_pos(-1, 0)) | (std::uint64_t{1} << l.m_pos(-1, 2));
  const auto q = block_swap_partner(l, two_minus);
  EXPECT_EQ(q.phase, -1.0);
  EXPECT_EQ(tier_plus(l, q.state), 2);
  EXPECT_EQ(tier_minus(l, q.state), 0);

  const auto b = enumerate_basis(2, 3, 3);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto once = block_swap_partner(l, b.state(i));
    const auto twice = block_swap_partner(l, once.state);
    EXPECT_EQ(twice.state, b.state(i));
    EXPECT_EQ(once.phase * twice.phase, 1.0);
    EXPECT_EQ(b.partner(b.partner(i)), i);
  }
}

TEST(Basis, FilterIdentityAndEmptySeeds) {
  const auto b = enumerate_basis(1, 2, 2);
  std::vector<std::vector<std::size_t>> adj(b.size());
  const auto same = reachability_filter(b, adj, b.states());
  EXPECT_EQ(same.states(), b.states());
  EXPECT_THROW(reachability_filter(b, adj, {}), ConfigError);
}

TEST(Convention, SearchSelectsOnePhysicalGenerator) {
  const auto& r = selected_convention();
  EXPECT_EQ(r.physical_classes, 1u);
  EXPECT_TRUE(r.trace_pass);
  EXPECT_TRUE(r.conjugation_pass);
  EXPECT_TRUE(r.oracle_pass);
  EXPECT_LE(r.oracle_error, 1e-4);
  EXPECT_EQ(r.selected.rules[0].sign, 1);
  EXPECT_FALSE(r.selected.rules[0].parity);
}

TEST(Filter, AndersonMatchesChargeConservation) {
  const Problem p = assemble(anderson_with_pade(1));
  ASSERT_EQ(p.basis.ne(), 8);
  const auto full = enumerate_basis(2, 8, 2);
  EXPECT_EQ(p.full_size, full.size());
  std::set<std::uint64_t> expected;
  for (auto s : full.states())
    if (charge_neutral(full.layout(), p.levels, s)) expected.insert(s);
  const std::set<std::uint64_t> got(p.basis.states().begin(), p.basis.states().end());
  EXPECT_EQ(got, expected);
  EXPECT_EQ(p.basis.size(), 228u);
  EXPECT_EQ(full.size(), 2192u);
  // Closed under block swap (RdtBasis construction enforces it).
  for (std::size_t i = 0; i < p.basis.size(); ++i) EXPECT_EQ(p.basis.partner(p.basis.partner(i)), i);
}

TEST(Filter, ReductionGrowsWithBathSize) {
  const Problem p2 = assemble(anderson_with_pade(2));
  EXPECT_EQ(p2.basis.size(), 484u);
  EXPECT_EQ(p2.full_size, 4816u);
  const Problem p3 = assemble(anderson_with_pade(3));
  EXPECT_GT(static_cast<double>(p3.full_size) / static_cast<double>(p3.basis.size()), 10.0);
}

TEST(Liouvillian, VonNeumannLimit) {
  SystemSpec sys;
  sys.ns = 1;
  sys.eps0 = 1.0;
  const auto basis = enumerate_basis(1, 0, 0);
  const Liouvillian L = build_liouvillian(sys.hamiltonian(false), {}, basis, selected_convention().selected, 1);
  const std::uint64_t coh = 1u;  // n = 1, n' = 0
  const auto i = *basis.find(coh);
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(4);
  x(static_cast<Eigen::Index>(i)) = 1.0;
  const Eigen::VectorXcd y = L.apply(x);
  EXPECT_NEAR(std::abs(y(static_cast<Eigen::Index>(i)) - cplx(0.0, -1.0)), 0.0, 1e-15);
  EXPECT_NEAR(y.norm(), 1.0, 1e-15);
}

TEST(Liouvillian, AndersonInvariants) {
  const Problem p = assemble(anderson_defaults(3.0));
  const auto inv = check_invariants(p.L, p.basis);
  EXPECT_LE(inv.trace_nullity, 1e-12);
  EXPECT_LE(inv.conjugation, 1e-12);
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXcd x = random_vector(p.basis.size(), rng);
    const Eigen::VectorXcd a = p.L.apply(conjugate_image(p.basis, x));
    const Eigen::VectorXcd b = conjugate_image(p.basis, p.L.apply(x));
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Liouvillian, UnfilteredAndersonInvariants) {
  ProblemSpec spec = anderson_with_pade(1);
  spec.filter = false;
  const Problem p = assemble(spec);
  const auto inv = check_invariants(p.L, p.basis);
  EXPECT_LE(inv.trace_nullity, 1e-12);
  EXPECT_LE(inv.conjugation, 1e-12);
}

TEST(Liouvillian, ApplyMatchesDenseAssembly) {
  reference::DiscreteLevel lv{0.3, cplx(0.4, 0.1), 0, 0};
  const auto levels = pair_levels(reference::discrete_level_modes({lv}, 1.5, 0.1));
  const auto basis = enumerate_basis(1, 1, 1);
  ASSERT_EQ(basis.size(), 12u);
  SystemSpec sys;
  sys.ns = 1;
  sys.eps0 = 0.8;
  const Liouvillian L = build_liouvillian(sys.hamiltonian(false), levels, basis, selected_convention().selected, 1,
                                          BuildOptions{false, 1e-12});
  Eigen::MatrixXcd dense = Eigen::MatrixXcd::Zero(12, 12);
  for (const auto& e : L.entries()) dense(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) += e.value;
  std::mt19937_64 rng(3);
  const Eigen::VectorXcd x = random_vector(12, rng);
  const Eigen::VectorXcd x2 = random_vector(12, rng);
  EXPECT_LE((L.apply(x) - dense * x).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(L.apply(Eigen::VectorXcd::Zero(12)).norm(), 0.0);
  const cplx a(0.3, -1.2), b(2.0, 0.5);
  EXPECT_LE((L.apply(a * x + b * x2) - a * L.apply(x) - b * L.apply(x2)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(L.apply(Eigen::VectorXcd::Zero(5)), DimensionError);
}

TEST(Liouvillian, TripletExport) {
  const auto basis = enumerate_basis(1, 0, 0);
  SystemSpec sys;
  sys.ns = 1;
  const Liouvillian L = build_liouvillian(sys.hamiltonian(false), {}, basis, selected_convention().selected, 1);
  std::ostringstream os;
  L.write_triplets(os);
  EXPECT_EQ(os.str().rfind("row,col,re,im,family,alpha\n", 0), 0u);
}

TEST(Observables, Occupation) {
  const auto basis = enumerate_basis(1, 1, 1);
  Eigen::MatrixXcd occ = Eigen::MatrixXcd::Zero(2, 2);
  occ(1, 1) = 1.0;
  EXPECT_DOUBLE_EQ(occupation_expectation(basis, embed_system_state(basis, occ), 0).value, 1.0);
  Eigen::MatrixXcd empty = Eigen::MatrixXcd::Zero(2, 2);
  empty(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(occupation_expectation(basis, embed_system_state(basis, empty), 0).value, 0.0);
  const Eigen::VectorXcd mix = embed_system_state(basis, 0.5 * (occ + empty));
  const auto r = occupation_expectation(basis, mix, 0);
  EXPECT_DOUBLE_EQ(r.value, 0.5);
  EXPECT_FALSE(r.flagged);
  EXPECT_DOUBLE_EQ(trace(basis, mix).real(), 1.0);
}

TEST(Observables, CurrentVanishesWithoutCoupling) {
  ProblemSpec spec = anderson_defaults(3.0);
  for (auto& r : spec.bath.reservoirs) r.coupling = {0.0, 0.0};
  spec.filter = false;
  spec.m_max = 1;
  const Problem p = assemble(spec);
  // Without raising terms no dissipaton amplitude builds up from a physical state.
  RdtVector rho = p.rho0;
  for (int k = 0; k < 20; ++k) rho = reference::rk4_step(p.L, rho, 0.01);
  EXPECT_EQ(reservoir_current(p.L, p.basis, rho.values, 0).value, 0.0);
  EXPECT_EQ(reservoir_current(p.L, p.basis, rho.values, 1).value, 0.0);
  EXPECT_THROW(reservoir_current(p.L, p.basis, rho.values, 2), ConfigError);
}
