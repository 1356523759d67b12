#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "dqpinn/bath.hpp"
#include "dqpinn/dqme/basis.hpp"
#include "dqpinn/errors.hpp"

namespace dqpinn::dqme {

// Single impurity (N_S = 2, spin-orbitals u = up, down) or spinless level (N_S = 1), with a sudden quench at t_quench.
struct SystemSpec {
  int ns = 2;
  double eps0 = 2.0;
  double u0 = 4.0;
  double d_eps = -7.0;
  double d_u = 6.0;
  double t_quench = 0.0;

  void validate() const {
    if (ns < 1 || ns > 2) throw ConfigError("system: N_S must be 1 or 2");
  }
  double epsilon(bool post) const { return post ? eps0 + d_eps : eps0; }
  double interaction(bool post) const { return post ? u0 + d_u : u0; }

  // H_S in the occupation basis; index bit u = n_u.
  Eigen::MatrixXcd hamiltonian(bool post) const {
    validate();
    const int dim = 1 << ns;
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
    for (int n = 0; n < dim; ++n) {
      const int occ = std::popcount(static_cast<unsigned>(n));
      double e = epsilon(post) * occ;
      if (ns == 2 && occ == 2) e += interaction(post);
      h(n, n) = e;
    }
    return h;
  }
};

// Both charges of one dissipaton index j = (alpha, u, p).
struct DissipatonLevel {
  int alpha = 0;
  int orbital = 0;
  int pole = 0;
  bath::ModeKind kind = bath::ModeKind::kLorentzianPole;
  cplx eta_minus{}, eta_plus{};
  cplx gamma_minus{}, gamma_plus{};
};

// Pairs sigma = +/- modes; levels ordered by reservoir, then spin-orbital, then pole.
inline std::vector<DissipatonLevel> pair_levels(const std::vector<bath::ExponentialMode>& modes) {
  std::map<std::tuple<int, int, int>, DissipatonLevel> by_key;
  std::map<std::tuple<int, int, int>, int> seen;
  for (const auto& m : modes) {
    const auto key = std::make_tuple(m.alpha, m.orbital, m.pole);
    auto& lv = by_key[key];
    lv.alpha = m.alpha;
    lv.orbital = m.orbital;
    lv.pole = m.pole;
    lv.kind = m.kind;
    int& mask = seen[key];
    const int flag = m.sigma > 0 ? 2 : 1;
    if (mask & flag) throw ConfigError("pair_levels: duplicate mode for one (alpha, u, p, sigma)");
    mask |= flag;
    if (m.sigma > 0) {
      lv.eta_plus = m.eta;
      lv.gamma_plus = m.gamma;
    } else {
      lv.eta_minus = m.eta;
      lv.gamma_minus = m.gamma;
    }
  }
  std::vector<DissipatonLevel> out;
  for (const auto& [key, lv] : by_key) {
    if (seen[key] != 3) throw ConfigError("pair_levels: mode without its opposite-charge partner");
    out.push_back(lv);
  }
  return out;
}

// Eight coupling families of the generator, in printed order:
// 0: c^dag b rho, 1: b rho c^dag, 2: c rho b^dag, 3: rho b^dag c,
// 4: c b^dag rho, 5: b^dag rho c, 6: c^dag rho b, 7: rho b c^dag.
struct FamilyRule {
  int block = -1;       // which dissipaton bit block b acts on: -1 (m-) or +1 (m+)
  int sign = 1;         // overall +-1
  bool parity = false;       // multiply by (-1)^(occupied bits of the source state)
  bool left_parity = false;  // multiply by (-1)^(occupied n bits of the source state)

  bool operator==(const FamilyRule&) const = default;
};

struct PhaseConvention {
  std::array<FamilyRule, 8> rules{};

  bool operator==(const PhaseConvention&) const = default;

  std::string describe() const {
    std::ostringstream os;
    for (int f = 0; f < 8; ++f) {
      if (f) os << ' ';
      os << f << ':' << (rules[f].block < 0 ? "m-" : "m+") << (rules[f].sign < 0 ? "-" : "+")
         << (rules[f].parity ? "P" : "") << (rules[f].left_parity ? "L" : "");
    }
    return os.str();
  }
};

enum class Term : std::uint8_t { kHamiltonian, kDamping, kLowering, kRaising };

inline const char* to_string(Term t) {
  switch (t) {
    case Term::kHamiltonian: return "hamiltonian";
    case Term::kDamping: return "damping";
    case Term::kLowering: return "tier-lowering";
    case Term::kRaising: return "tier-raising";
  }
  return "unknown";
}

struct TaggedEntry {
  std::size_t row;
  std::size_t col;
  cplx value;
  Term term;
  int family;  // -1 for hamiltonian and damping
  int alpha;   // -1 for hamiltonian and damping
};

namespace detail {

enum class Space { kN, kNp, kM };
struct ElementaryOp {
  Space space;
  bool creation;
};

inline const std::array<std::array<ElementaryOp, 2>, 8>& family_ops() {
  using S = Space;
  static const std::array<std::array<ElementaryOp, 2>, 8> ops{{
      {{{S::kM, false}, {S::kN, true}}},
      {{{S::kM, false}, {S::kNp, false}}},
      {{{S::kN, false}, {S::kM, false}}},
      {{{S::kM, false}, {S::kNp, true}}},
      {{{S::kM, true}, {S::kN, false}}},
      {{{S::kM, true}, {S::kNp, true}}},
      {{{S::kN, true}, {S::kM, true}}},
      {{{S::kM, true}, {S::kNp, false}}},
  }};
  return ops;
}

inline cplx family_coefficient(int f, const DissipatonLevel& lv) {
  switch (f) {
    case 0: return -kI;
    case 1: return kI;
    case 2: return -kI;
    case 3: return kI;
    case 4: return kI * lv.eta_minus;
    case 5: return kI * std::conj(lv.eta_plus);
    case 6: return -kI * lv.eta_plus;
    case 7: return -kI * std::conj(lv.eta_minus);
  }
  return 0.0;
}

}  // namespace detail

// Raw action of family f on one source state, without the convention's sign and parity factors.
struct RawCoupling {
  std::uint64_t target;
  cplx value;
};

inline std::optional<RawCoupling> apply_family(const Layout& l, int family, int block, int j,
                                               const DissipatonLevel& lv, std::uint64_t s) {
  std::uint64_t cur = s;
  int sign = 1;
  for (const auto& op : detail::family_ops()[family]) {
    int pos = 0;
    switch (op.space) {
      case detail::Space::kN: pos = l.n_pos(lv.orbital); break;
      case detail::Space::kNp: pos = l.np_pos(lv.orbital); break;
      case detail::Space::kM: pos = l.m_pos(block, j); break;
    }
    const auto r = op.creation ? create(cur, pos) : annihilate(cur, pos);
    if (!r) return std::nullopt;
    cur = r->state;
    sign *= r->sign;
  }
  return RawCoupling{cur, static_cast<double>(sign) * detail::family_coefficient(family, lv)};
}

inline double convention_factor(const FamilyRule& rule, const Layout& l, std::uint64_t source) {
  double f = rule.sign;
  if (rule.parity && (std::popcount(source) & 1)) f = -f;
  if (rule.left_parity && (std::popcount(n_bits(l, source)) & 1)) f = -f;
  return f;
}

inline constexpr double kDropTol = 1e-15;

class Liouvillian {
 public:
  using Sparse = Eigen::SparseMatrix<cplx, Eigen::RowMajor, std::int64_t>;

  Liouvillian() = default;
  Liouvillian(std::size_t dim, std::vector<TaggedEntry> entries, int n_reservoirs)
      : dim_(dim), n_reservoirs_(n_reservoirs), entries_(std::move(entries)) {
    std::vector<Eigen::Triplet<cplx, std::int64_t>> trips;
    trips.reserve(entries_.size());
    for (const auto& e : entries_)
      trips.emplace_back(static_cast<std::int64_t>(e.row), static_cast<std::int64_t>(e.col), e.value);
    matrix_.resize(static_cast<std::int64_t>(dim), static_cast<std::int64_t>(dim));
    matrix_.setFromTriplets(trips.begin(), trips.end());
    matrix_.prune([](const std::int64_t&, const std::int64_t&, const cplx& v) { return std::abs(v) >= kDropTol; });
    matrix_.makeCompressed();
  }

  std::size_t dim() const { return dim_; }
  int n_reservoirs() const { return n_reservoirs_; }
  const Sparse& matrix() const { return matrix_; }
  const std::vector<TaggedEntry>& entries() const { return entries_; }
  std::size_t nonzeros() const { return static_cast<std::size_t>(matrix_.nonZeros()); }

  cplx coeff(std::size_t r, std::size_t c) const {
    return matrix_.coeff(static_cast<std::int64_t>(r), static_cast<std::int64_t>(c));
  }

  template <class In, class Out>
  void apply(const In& x, Out& y) const {
    if (static_cast<std::size_t>(x.rows()) != dim_) throw DimensionError("apply_liouvillian: dimension mismatch");
    y.noalias() = matrix_ * x;
  }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const {
    Eigen::VectorXcd y(x.size());
    apply(x, y);
    return y;
  }

  // y = L^H x
  template <class In, class Out>
  void apply_adjoint(const In& x, Out& y) const {
    if (static_cast<std::size_t>(x.rows()) != dim_) throw DimensionError("apply_adjoint: dimension mismatch");
    y.noalias() = matrix_.adjoint() * x;
  }

  void write_triplets(std::ostream& os) const {
    os << "row,col,re,im,family,alpha\n";
    os.precision(17);
    for (const auto& e : entries_) {
      os << e.row << ',' << e.col << ',' << e.value.real() << ',' << e.value.imag() << ',' << to_string(e.term);
      if (e.family >= 0) os << '#' << e.family;
      os << ',' << e.alpha << '\n';
    }
  }

 private:
  std::size_t dim_ = 0;
  int n_reservoirs_ = 0;
  Sparse matrix_;
  std::vector<TaggedEntry> entries_;
};

struct BuildOptions {
  bool check_invariants = true;
  double invariant_tol = 1e-12;
};

struct InvariantReport {
  double trace_nullity = 0.0;
  double conjugation = 0.0;
};

inline double trace_row_nullity(const Liouvillian& L, const RdtBasis& basis) {
  Eigen::VectorXcd colsum = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis.size()));
  const auto& m = L.matrix();
  for (std::int64_t r = 0; r < m.outerSize(); ++r) {
    if (!is_vacuum_diagonal(basis.layout(), basis.state(static_cast<std::size_t>(r)))) continue;
    for (Liouvillian::Sparse::InnerIterator it(m, r); it; ++it) colsum(it.col()) += it.value();
  }
  return colsum.size() ? colsum.cwiseAbs().maxCoeff() : 0.0;
}

// max |L(p(r), p(c)) - ph(r) ph(c) conj(L(r, c))| over all stored entries.
inline double conjugation_residual(const Liouvillian& L, const RdtBasis& basis) {
  double worst = 0.0;
  const auto& m = L.matrix();
  for (std::int64_t r = 0; r < m.outerSize(); ++r) {
    const auto ru = static_cast<std::size_t>(r);
    for (Liouvillian::Sparse::InnerIterator it(m, r); it; ++it) {
      const auto cu = static_cast<std::size_t>(it.col());
      const cplx mirrored = L.coeff(basis.partner(ru), basis.partner(cu));
      const cplx expect = basis.phase(ru) * basis.phase(cu) * std::conj(it.value());
      worst = std::max(worst, std::abs(mirrored - expect));
    }
  }
  return worst;
}

inline InvariantReport check_invariants(const Liouvillian& L, const RdtBasis& basis) {
  return {trace_row_nullity(L, basis), conjugation_residual(L, basis)};
}

inline Liouvillian build_liouvillian(const Eigen::MatrixXcd& h_sys, const std::vector<DissipatonLevel>& levels,
                                     const RdtBasis& basis, const PhaseConvention& conv, int n_reservoirs,
                                     const BuildOptions& opts = {}) {
  const Layout& l = basis.layout();
  if (static_cast<int>(levels.size()) != l.ne) throw DimensionError("build_liouvillian: level count != N_E");
  if (h_sys.rows() != (1 << l.ns) || h_sys.cols() != (1 << l.ns))
    throw DimensionError("build_liouvillian: system Hamiltonian has wrong dimension");
  for (const auto& lv : levels)
    if (lv.orbital < 0 || lv.orbital >= l.ns || lv.alpha < 0 || lv.alpha >= n_reservoirs)
      throw ConfigError("build_liouvillian: level refers to an unknown orbital or reservoir");

  std::vector<TaggedEntry> entries;
  auto push = [&](std::size_t col, std::uint64_t target, cplx v, Term term, int family, int alpha) {
    if (std::abs(v) < kDropTol) return;
    const auto row = basis.find(target);
    if (!row) {
      if (tier(l, target) <= basis.m_max())
        throw ClosureError("build_liouvillian: generator leaves the filtered state space");
      return;
    }
    entries.push_back({*row, col, v, term, family, alpha});
  };

  const std::uint64_t sys_dim = std::uint64_t{1} << l.ns;
  for (std::size_t c = 0; c < basis.size(); ++c) {
    const std::uint64_t s = basis.state(c);
    const std::uint64_t n = n_bits(l, s);
    const std::uint64_t np = np_bits(l, s);
    const std::uint64_t rest = s & ~(l.n_mask() | l.np_mask());
    for (std::uint64_t k = 0; k < sys_dim; ++k) {
      const cplx hl = h_sys(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
      if (hl != cplx(0.0)) push(c, rest | k | (np << l.ns), -kI * hl, Term::kHamiltonian, -1, -1);
      const cplx hr = h_sys(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(k));
      if (hr != cplx(0.0)) push(c, rest | n | (k << l.ns), kI * hr, Term::kHamiltonian, -1, -1);
    }
    cplx damp = 0.0;
    for (int j = 0; j < l.ne; ++j) {
      if (bit(s, l.m_pos(-1, j))) damp -= levels[j].gamma_minus;
      if (bit(s, l.m_pos(+1, j))) damp -= levels[j].gamma_plus;
    }
    push(c, s, damp, Term::kDamping, -1, -1);
    for (int j = 0; j < l.ne; ++j) {
      for (int f = 0; f < 8; ++f) {
        const auto& rule = conv.rules[f];
        const auto raw = apply_family(l, f, rule.block, j, levels[j], s);
        if (!raw) continue;
        push(c, raw->target, convention_factor(rule, l, s) * raw->value, f < 4 ? Term::kLowering : Term::kRaising, f,
             levels[j].alpha);
      }
    }
  }

  Liouvillian L(basis.size(), std::move(entries), n_reservoirs);
  if (opts.check_invariants) {
    const auto inv = check_invariants(L, basis);
    if (inv.trace_nullity > opts.invariant_tol)
      throw ConventionError("build_liouvillian: trace-row nullity violated (" + std::to_string(inv.trace_nullity) + ")");
    if (inv.conjugation > opts.invariant_tol)
      throw ConventionError("build_liouvillian: conjugation symmetry violated (" + std::to_string(inv.conjugation) + ")");
  }
  return L;
}

// Undirected structural adjacency of L over basis ordinals.
inline std::vector<std::vector<std::size_t>> structure_adjacency(const Liouvillian& L) {
  std::vector<std::vector<std::size_t>> adj(L.dim());
  const auto& m = L.matrix();
  for (std::int64_t r = 0; r < m.outerSize(); ++r)
    for (Liouvillian::Sparse::InnerIterator it(m, r); it; ++it) {
      const auto a = static_cast<std::size_t>(r);
      const auto b = static_cast<std::size_t>(it.col());
      if (a == b) continue;
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
  for (auto& v : adj) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return adj;
}

// Seeds for the physical sector: every vacuum-diagonal state.
inline std::vector<std::uint64_t> vacuum_diagonal_seeds(const RdtBasis& basis) {
  std::vector<std::uint64_t> out;
  for (auto i : basis.vacuum_diagonal()) out.push_back(basis.state(i));
  return out;
}

struct FilteredGenerator {
  RdtBasis full;
  RdtBasis basis;
  Liouvillian L;
};

// Enumerate, build on the full truncated space, filter from the seeds, rebuild on the filtered space.
inline FilteredGenerator build_filtered(const Eigen::MatrixXcd& h_sys, const std::vector<DissipatonLevel>& levels,
                                        int ns, int m_max, const PhaseConvention& conv, int n_reservoirs,
                                        const std::vector<std::uint64_t>& seeds = {}, const BuildOptions& opts = {}) {
  FilteredGenerator g;
  g.full = enumerate_basis(ns, static_cast<int>(levels.size()), m_max);
  BuildOptions structural = opts;
  structural.check_invariants = false;
  const Liouvillian L_full = build_liouvillian(h_sys, levels, g.full, conv, n_reservoirs, structural);
  g.basis = reachability_filter(g.full, structure_adjacency(L_full), seeds.empty() ? vacuum_diagonal_seeds(g.full) : seeds);
  g.L = build_liouvillian(h_sys, levels, g.basis, conv, n_reservoirs, opts);
  return g;
}

}  // namespace dqpinn::dqme
