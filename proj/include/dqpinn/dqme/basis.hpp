#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <queue>
#include <unordered_map>
#include <vector>

#include "dqpinn/errors.hpp"

namespace dqpinn::dqme {

// Bit positions in the global fermionic ordering [n_1..n_NS, n'_1..n'_NS, m-_1..m-_NE, m+_1..m+_NE].
struct Layout {
  int ns = 1;
  int ne = 0;

  int width() const { return 2 * ns + 2 * ne; }
  int n_pos(int u) const { return u; }
  int np_pos(int u) const { return ns + u; }
  int m_pos(int sigma, int j) const { return 2 * ns + (sigma < 0 ? 0 : ne) + j; }

  std::uint64_t n_mask() const { return (std::uint64_t{1} << ns) - 1; }
  std::uint64_t np_mask() const { return n_mask() << ns; }
  std::uint64_t minus_mask() const { return ((std::uint64_t{1} << ne) - 1) << (2 * ns); }
  std::uint64_t plus_mask() const { return minus_mask() << ne; }
  std::uint64_t m_mask() const { return minus_mask() | plus_mask(); }

  bool operator==(const Layout&) const = default;
};

inline bool bit(std::uint64_t s, int pos) { return (s >> pos) & 1u; }

// Occupied modes strictly before pos in the global ordering.
inline int jw_count(std::uint64_t s, int pos) {
  return std::popcount(s & ((std::uint64_t{1} << pos) - 1));
}

// Elementary fermionic operator on the composite string; nullopt when Pauli-blocked.
struct OpResult {
  std::uint64_t state;
  int sign;
};

inline std::optional<OpResult> annihilate(std::uint64_t s, int pos) {
  if (!bit(s, pos)) return std::nullopt;
  return OpResult{s ^ (std::uint64_t{1} << pos), (jw_count(s, pos) & 1) ? -1 : 1};
}

inline std::optional<OpResult> create(std::uint64_t s, int pos) {
  if (bit(s, pos)) return std::nullopt;
  return OpResult{s ^ (std::uint64_t{1} << pos), (jw_count(s, pos) & 1) ? -1 : 1};
}

inline int tier(const Layout& l, std::uint64_t s) { return std::popcount(s & l.m_mask()); }
inline int tier_minus(const Layout& l, std::uint64_t s) { return std::popcount(s & l.minus_mask()); }
inline int tier_plus(const Layout& l, std::uint64_t s) { return std::popcount(s & l.plus_mask()); }
inline std::uint64_t n_bits(const Layout& l, std::uint64_t s) { return s & l.n_mask(); }
inline std::uint64_t np_bits(const Layout& l, std::uint64_t s) { return (s & l.np_mask()) >> l.ns; }

// Dissipaton vacuum with n = n' (rows of the reduced density operator's diagonal).
inline bool is_vacuum_diagonal(const Layout& l, std::uint64_t s) {
  return (s & l.m_mask()) == 0 && n_bits(l, s) == np_bits(l, s);
}

struct PartnerResult {
  std::uint64_t state;
  double phase;
};

// s^T = (n', n; m+, m-) with phase (-1)^(floor(M-/2) + floor(M+/2)).
inline PartnerResult block_swap_partner(const Layout& l, std::uint64_t s) {
  const std::uint64_t n = n_bits(l, s);
  const std::uint64_t np = np_bits(l, s);
  const std::uint64_t mm = (s & l.minus_mask()) >> (2 * l.ns);
  const std::uint64_t mp = (s & l.plus_mask()) >> (2 * l.ns + l.ne);
  const std::uint64_t t = np | (n << l.ns) | (mp << (2 * l.ns)) | (mm << (2 * l.ns + l.ne));
  const int k = tier_minus(l, s) / 2 + tier_plus(l, s) / 2;
  return {t, (k & 1) ? -1.0 : 1.0};
}

// Sort key: lexicographic on the bit string with position 0 most significant.
inline std::uint64_t lex_key(const Layout& l, std::uint64_t s) {
  std::uint64_t k = 0;
  for (int p = 0; p < l.width(); ++p)
    if (bit(s, p)) k |= std::uint64_t{1} << (l.width() - 1 - p);
  return k;
}

class RdtBasis {
 public:
  RdtBasis() = default;

  RdtBasis(Layout layout, int m_max, std::vector<std::uint64_t> states) : layout_(layout), m_max_(m_max) {
    std::sort(states.begin(), states.end(),
              [&](std::uint64_t a, std::uint64_t b) { return lex_key(layout_, a) < lex_key(layout_, b); });
    states.erase(std::unique(states.begin(), states.end()), states.end());
    states_ = std::move(states);
    index_.reserve(states_.size() * 2);
    for (std::size_t i = 0; i < states_.size(); ++i) index_.emplace(states_[i], i);
    partner_.resize(states_.size());
    phase_.resize(states_.size());
    for (std::size_t i = 0; i < states_.size(); ++i) {
      if (tier(layout_, states_[i]) > m_max_) throw Error("RdtBasis: state exceeds M_max");
      const auto p = block_swap_partner(layout_, states_[i]);
      const auto it = index_.find(p.state);
      if (it == index_.end()) throw ClosureError("RdtBasis: state set not closed under block swap");
      partner_[i] = it->second;
      phase_[i] = p.phase;
    }
  }

  const Layout& layout() const { return layout_; }
  int ns() const { return layout_.ns; }
  int ne() const { return layout_.ne; }
  int m_max() const { return m_max_; }
  std::size_t size() const { return states_.size(); }
  std::uint64_t state(std::size_t i) const { return states_[i]; }
  const std::vector<std::uint64_t>& states() const { return states_; }
  std::size_t partner(std::size_t i) const { return partner_[i]; }
  double phase(std::size_t i) const { return phase_[i]; }

  std::optional<std::size_t> find(std::uint64_t s) const {
    const auto it = index_.find(s);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::size_t> vacuum_diagonal() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < states_.size(); ++i)
      if (is_vacuum_diagonal(layout_, states_[i])) out.push_back(i);
    return out;
  }

  // FNV-1a over the shape and the ordered state list.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    };
    mix(static_cast<std::uint64_t>(layout_.ns));
    mix(static_cast<std::uint64_t>(layout_.ne));
    mix(static_cast<std::uint64_t>(m_max_));
    mix(states_.size());
    for (auto s : states_) mix(s);
    return h;
  }

 private:
  Layout layout_;
  int m_max_ = 0;
  std::vector<std::uint64_t> states_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::vector<std::size_t> partner_;
  std::vector<double> phase_;
};

inline constexpr std::size_t kDefaultStateCap = 2'000'000;

inline RdtBasis enumerate_basis(int ns, int ne, int m_max, std::size_t cap = kDefaultStateCap) {
  if (ns < 1 || ns > 2) throw ConfigError("enumerate_basis: N_S must be 1 or 2");
  if (ne < 0 || 2 * ns + 2 * ne > 62) throw CapacityError("enumerate_basis: too many dissipaton modes");
  if (m_max < 0) throw ConfigError("enumerate_basis: M_max must be >= 0");
  const Layout layout{ns, ne};
  const int nm = 2 * ne;
  const int top = std::min(m_max, nm);
  // Count first so the cap fails before allocating.
  double count = 0.0;
  for (int k = 0; k <= top; ++k) {
    double c = 1.0;
    for (int i = 0; i < k; ++i) c = c * (nm - i) / (i + 1);
    count += c;
  }
  count *= static_cast<double>(std::uint64_t{1} << (2 * ns));
  if (count > static_cast<double>(cap)) throw CapacityError("enumerate_basis: state count exceeds cap");
  std::vector<std::uint64_t> states;
  states.reserve(static_cast<std::size_t>(count));
  const std::uint64_t sys_count = std::uint64_t{1} << (2 * ns);
  auto emit = [&](std::uint64_t m) {
    for (std::uint64_t sys = 0; sys < sys_count; ++sys) states.push_back(sys | (m << (2 * ns)));
  };
  emit(0);
  for (int k = 1; k <= top; ++k) {
    // Gosper's hack over k-subsets of the 2*N_E dissipaton bits.
    std::uint64_t m = (std::uint64_t{1} << k) - 1;
    while (m < (std::uint64_t{1} << nm)) {
      emit(m);
      const std::uint64_t c = m & (~m + 1);
      const std::uint64_t r = m + c;
      m = (((r ^ m) >> 2) / c) | r;
    }
  }
  return RdtBasis(layout, m_max, std::move(states));
}

// Undirected closure of the seeds under a structural adjacency over basis ordinals.
inline RdtBasis reachability_filter(const RdtBasis& basis, const std::vector<std::vector<std::size_t>>& adjacency,
                                    const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("reachability_filter: empty seed set");
  if (adjacency.size() != basis.size()) throw DimensionError("reachability_filter: adjacency size mismatch");
  std::vector<char> seen(basis.size(), 0);
  std::queue<std::size_t> q;
  for (auto s : seeds) {
    const auto i = basis.find(s);
    if (!i) throw ConfigError("reachability_filter: seed not in basis");
    if (!seen[*i]) {
      seen[*i] = 1;
      q.push(*i);
    }
  }
  while (!q.empty()) {
    const std::size_t i = q.front();
    q.pop();
    for (std::size_t j : adjacency[i])
      if (!seen[j]) {
        seen[j] = 1;
        q.push(j);
      }
  }
  std::vector<std::uint64_t> kept;
  for (std::size_t i = 0; i < basis.size(); ++i)
    if (seen[i]) kept.push_back(basis.state(i));
  return RdtBasis(basis.layout(), basis.m_max(), std::move(kept));
}

}  // namespace dqpinn::dqme
