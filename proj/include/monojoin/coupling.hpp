#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "dist.hpp"
#include "errors.hpp"

namespace monojoin {

inline constexpr double kMassDust = 1e-14;     // entries below this are dropped
inline constexpr long long kDenseBudget = 1LL << 24;  // dense table guard

// Ordered finite alphabet of base^length blocks. Elements are identified with
// integers in [0, base^length); the integer order equals the lexicographic
// order on digit strings (most significant digit first), so "plain" alphabets
// are just length-1 blocks.
struct BlockAlphabet {
  int base = 0;
  int length = 0;

  long long size() const {
    if (base < 1 || length < 1)
      throw PreconditionError("BlockAlphabet: base and length must be positive");
    long long s = 1;
    for (int i = 0; i < length; ++i) {
      if (s > (1LL << 62) / base)
        throw BudgetExceeded("BlockAlphabet: alphabet size exceeds index range");
      s *= base;
    }
    return s;
  }

  std::vector<int> decode(long long v) const {
    std::vector<int> d(length);
    for (int i = length - 1; i >= 0; --i) {
      d[i] = static_cast<int>(v % base);
      v /= base;
    }
    return d;
  }

  long long encode(const std::vector<int>& d) const {
    long long v = 0;
    for (int x : d) {
      if (x < 0 || x >= base)
        throw PreconditionError("BlockAlphabet: digit outside base");
      v = v * base + x;
    }
    return v;
  }

  friend bool operator==(const BlockAlphabet&, const BlockAlphabet&) = default;
};

// Sparse nonnegative mass function on rowAlphabet x colAlphabet with total
// mass 1. Zero entries are never stored; construction validates the total to
// 1e-12 and renormalizes. The map ordering (row-major) makes every iteration
// over the support deterministic.
class Coupling {
 public:
  using Key = std::pair<long long, long long>;
  using Mass = std::map<Key, double>;

  Coupling(BlockAlphabet row, BlockAlphabet col, Mass mass)
      : row_(row), col_(col), mass_(std::move(mass)) {
    const long long nr = row_.size(), nc = col_.size();
    CompensatedSum acc;
    for (auto it = mass_.begin(); it != mass_.end();) {
      const auto& [key, v] = *it;
      if (key.first < 0 || key.first >= nr || key.second < 0 || key.second >= nc)
        throw PreconditionError("Coupling: index outside alphabet");
      if (!(v >= 0.0)) throw PreconditionError("Coupling: negative or nan mass");
      if (v == 0.0) {
        it = mass_.erase(it);
        continue;
      }
      acc.add(v);
      ++it;
    }
    const double total = acc.value();
    if (std::abs(total - 1.0) > kDistTol)
      throw PreconditionError("Coupling: total mass is not 1");
    for (auto& [key, v] : mass_) v /= total;
  }

  const BlockAlphabet& row_alphabet() const { return row_; }
  const BlockAlphabet& col_alphabet() const { return col_; }
  const Mass& mass() const { return mass_; }

  double at(long long a, long long b) const {
    auto it = mass_.find({a, b});
    return it == mass_.end() ? 0.0 : it->second;
  }

  std::vector<double> row_sums() const {
    const long long nr = row_.size();
    if (nr > kDenseBudget) throw BudgetExceeded("Coupling: row alphabet too large");
    std::vector<double> s(nr, 0.0);
    for (const auto& [key, v] : mass_) s[key.first] += v;
    return s;
  }

  std::vector<double> col_sums() const {
    const long long nc = col_.size();
    if (nc > kDenseBudget) throw BudgetExceeded("Coupling: col alphabet too large");
    std::vector<double> s(nc, 0.0);
    for (const auto& [key, v] : mass_) s[key.second] += v;
    return s;
  }

 private:
  BlockAlphabet row_;
  BlockAlphabet col_;
  Mass mass_;
};

inline std::pair<Dist, Dist> marginals(const Coupling& c) {
  return {Dist(c.row_sums()), Dist(c.col_sums())};
}

// Coupling induced by pushing one shared uniform variable through both
// generalized inverse cdfs, with the convention Finv(y) = sup{x : F(x) < y}.
// mass(a, b) is the overlap length of the cdf interval of a under p with the
// cdf interval of b under q; marginals are exact up to accumulated rounding.
inline Coupling quantile_coupling(const Dist& p, const Dist& q) {
  Coupling::Mass m;
  const int np = p.n(), nq = q.n();
  int i = 0, j = 0;
  double cp = p[0], cq = q[0], lo = 0.0;
  while (true) {
    const double hi = std::min(cp, cq);
    if (hi > lo) m[{i, j}] += hi - lo;
    lo = hi;
    const bool advP = cp <= cq, advQ = cq <= cp;
    if (advP) {
      if (++i >= np) break;
      cp += p[i];
    }
    if (advQ) {
      if (++j >= nq) break;
      cq += q[j];
    }
  }
  // prefix sums that tie in exact arithmetic can differ by an ulp here,
  // leaving sliver cells of width ~1e-16 that genuine interval overlaps
  // never produce; drop them so support statements stay exact
  for (auto it = m.begin(); it != m.end();)
    it = (it->second <= kMassDust) ? m.erase(it) : std::next(it);
  return Coupling({np, 1}, {nq, 1}, std::move(m));
}

namespace detail {
inline void require_comparable(const Coupling& c) {
  if (c.row_alphabet().base != c.col_alphabet().base ||
      c.row_alphabet().length != c.col_alphabet().length)
    throw PreconditionError("coupling alphabets are not comparable");
}
}  // namespace detail

// every stored pair has row >= col coordinatewise (blocks compare digitwise)
inline bool is_monotone(const Coupling& c) {
  detail::require_comparable(c);
  const auto& ra = c.row_alphabet();
  for (const auto& [key, v] : c.mass()) {
    const auto da = ra.decode(key.first), db = ra.decode(key.second);
    for (int t = 0; t < ra.length; ++t)
      if (da[t] < db[t]) return false;
  }
  return true;
}

// every stored pair is digitwise inside the relation
inline bool respects_relation(const Coupling& c, const Relation& R) {
  detail::require_comparable(c);
  const auto& ra = c.row_alphabet();
  if (R.n != ra.base)
    throw PreconditionError("respects_relation: relation alphabet mismatch");
  for (const auto& [key, v] : c.mass()) {
    const auto da = ra.decode(key.first), db = ra.decode(key.second);
    for (int t = 0; t < ra.length; ++t)
      if (!R.contains(da[t], db[t])) return false;
  }
  return true;
}

// support(fine) contained in support(coarse); alphabets must agree
inline bool is_subordinate(const Coupling& fine, const Coupling& coarse) {
  if (!(fine.row_alphabet() == coarse.row_alphabet()) ||
      !(fine.col_alphabet() == coarse.col_alphabet()))
    throw PreconditionError("is_subordinate: alphabets differ");
  for (const auto& [key, v] : fine.mass())
    if (coarse.at(key.first, key.second) <= 0.0) return false;
  return true;
}

// rows carrying positive mass to two or more distinct columns of bprime
inline std::set<long long> split_elements(const Coupling& c,
                                          const std::set<long long>& bprime) {
  const long long nc = c.col_alphabet().size();
  for (long long b : bprime)
    if (b < 0 || b >= nc)
      throw PreconditionError("split_elements: column outside alphabet");
  std::map<long long, long long> firstCol;
  std::set<long long> split;
  for (const auto& [key, v] : c.mass()) {
    if (!bprime.count(key.second)) continue;
    auto [it, fresh] = firstCol.try_emplace(key.first, key.second);
    if (!fresh && it->second != key.second) split.insert(key.first);
  }
  return split;
}

namespace detail {

// One cycle of the bipartite support graph restricted to columns of bprime,
// as an even-length list of (row, col) edges; empty when the graph is acyclic.
// Vertices and neighbors are scanned in ascending order so the result is a
// deterministic function of the support.
inline std::vector<Coupling::Key> find_restricted_cycle(
    const Coupling::Mass& m, const std::set<long long>& bprime) {
  // vertex encoding: row r -> 2r, col c -> 2c+1
  std::map<long long, std::vector<long long>> adj;
  for (const auto& [key, v] : m) {
    if (!bprime.count(key.second)) continue;
    adj[2 * key.first].push_back(2 * key.second + 1);
    adj[2 * key.second + 1].push_back(2 * key.first);
  }
  for (auto& [u, nbrs] : adj) std::sort(nbrs.begin(), nbrs.end());

  std::map<long long, int> state;  // 0 absent/unvisited, 1 on path, 2 done
  std::map<long long, long long> parent;
  std::vector<long long> cycleVerts;

  std::function<bool(long long, long long)> dfs = [&](long long u,
                                                      long long par) {
    state[u] = 1;
    for (long long v : adj[u]) {
      if (v == par) continue;
      const int sv = state.count(v) ? state[v] : 0;
      if (sv == 1) {
        // walk u back up to v along parents
        cycleVerts.push_back(v);
        for (long long w = u; w != v; w = parent[w]) cycleVerts.push_back(w);
        std::reverse(cycleVerts.begin() + 1, cycleVerts.end());
        return true;
      }
      if (sv == 0) {
        parent[v] = u;
        if (dfs(v, u)) return true;
      }
    }
    state[u] = 2;
    return false;
  };

  for (const auto& [u, nbrs] : adj) {
    if ((state.count(u) ? state[u] : 0) == 0) {
      parent[u] = -1;
      if (dfs(u, -1)) break;
    }
  }
  if (cycleVerts.empty()) return {};

  std::vector<Coupling::Key> edges;
  const size_t L = cycleVerts.size();
  for (size_t t = 0; t < L; ++t) {
    long long a = cycleVerts[t], b = cycleVerts[(t + 1) % L];
    if (a % 2 == 1) std::swap(a, b);  // orient as (row, col)
    edges.push_back({a / 2, (b - 1) / 2});
  }
  return edges;
}

}  // namespace detail

// Subordinate refinement with the same marginals that splits at most
// #bprime - 1 rows inside bprime. Mass is shifted around support cycles of
// the bprime-restricted bipartite graph until that graph is acyclic; an
// acyclic bipartite graph has fewer edges than vertices, which forces the
// split bound. The cancelled edge is always the lowest (mass, row, col) edge
// of the cycle, so the output is deterministic.
inline Coupling marriage_refine(const Coupling& alpha,
                                const std::set<long long>& bprime) {
  const long long nc = alpha.col_alphabet().size();
  for (long long b : bprime)
    if (b < 0 || b >= nc)
      throw PreconditionError("marriage_refine: column outside alphabet");

  Coupling::Mass m = alpha.mass();
  while (true) {
    const auto cycle = detail::find_restricted_cycle(m, bprime);
    if (cycle.empty()) break;

    // pick the globally smallest edge of the cycle and drain its class
    size_t best = 0;
    for (size_t t = 1; t < cycle.size(); ++t) {
      const double mt = m[cycle[t]], mb = m[cycle[best]];
      if (mt < mb || (mt == mb && cycle[t] < cycle[best])) best = t;
    }
    const double delta = m[cycle[best]];
    const int drainParity = static_cast<int>(best % 2);
    for (size_t t = 0; t < cycle.size(); ++t) {
      if (static_cast<int>(t % 2) == drainParity) {
        auto it = m.find(cycle[t]);
        it->second -= delta;
        if (t == best || it->second <= kMassDust) m.erase(it);
      } else {
        m[cycle[t]] += delta;
      }
    }
  }

  // dropped dust perturbs the total by at most a few 1e-14; rescale so the
  // constructor's total check cannot trip on large supports
  double total = 0.0;
  for (const auto& [k, v] : m) total += v;
  for (auto& [k, v] : m) v /= total;
  return Coupling(alpha.row_alphabet(), alpha.col_alphabet(), std::move(m));
}

// m-fold independent product of c with itself over concatenated blocks
inline Coupling product_power(const Coupling& c, int m,
                              long long supportBudget = 1LL << 22) {
  if (m < 1) throw PreconditionError("product_power: m must be positive");
  const double projected =
      std::pow(static_cast<double>(c.mass().size()), static_cast<double>(m));
  if (!(projected <= static_cast<double>(supportBudget)))
    throw BudgetExceeded("product_power: support budget exceeded");

  const BlockAlphabet row{c.row_alphabet().base, c.row_alphabet().length * m};
  const BlockAlphabet col{c.col_alphabet().base, c.col_alphabet().length * m};
  const long long rStep = c.row_alphabet().size(), cStep = c.col_alphabet().size();
  (void)row.size();  // index range guard
  (void)col.size();

  Coupling::Mass acc{{{0, 0}, 1.0}};
  for (int step = 0; step < m; ++step) {
    Coupling::Mass next;
    for (const auto& [ka, va] : acc)
      for (const auto& [kb, vb] : c.mass())
        next[{ka.first * rStep + kb.first, ka.second * cStep + kb.second}] =
            va * vb;
    acc = std::move(next);
  }
  return Coupling(row, col, std::move(acc));
}

// Feasibility of a relation-respecting coupling with marginals p and q,
// decided as a bipartite max-flow problem (source -> a with capacity p_a,
// a -> b arc iff (a, b) allowed, b -> sink with capacity q_b). Feasible iff
// the max flow reaches 1 up to 1e-10; the flow on the middle arcs is the
// witness coupling.
inline std::optional<Coupling> r_dominates(const Dist& p, const Dist& q,
                                           const Relation& R) {
  if (p.n() != q.n()) throw PreconditionError("r_dominates: alphabet sizes differ");
  if (R.n != p.n()) throw PreconditionError("r_dominates: relation alphabet mismatch");
  const int n = p.n();
  const int S = 0, T = 2 * n + 1, V = 2 * n + 2;
  std::vector<std::vector<double>> cap(V, std::vector<double>(V, 0.0));
  for (int a = 0; a < n; ++a) cap[S][1 + a] = p[a];
  for (const auto& [a, b] : R.pairs) cap[1 + a][n + 1 + b] = 2.0;
  for (int b = 0; b < n; ++b) cap[n + 1 + b][T] = q[b];

  double flow = 0.0;
  while (true) {
    // shortest augmenting path over residual capacities
    std::vector<int> prev(V, -1);
    std::vector<int> queue{S};
    prev[S] = S;
    for (size_t qi = 0; qi < queue.size() && prev[T] < 0; ++qi) {
      const int u = queue[qi];
      for (int v = 0; v < V; ++v)
        if (prev[v] < 0 && cap[u][v] > 1e-15) {
          prev[v] = u;
          queue.push_back(v);
        }
    }
    if (prev[T] < 0) break;
    double delta = 2.0;
    for (int v = T; v != S; v = prev[v]) delta = std::min(delta, cap[prev[v]][v]);
    for (int v = T; v != S; v = prev[v]) {
      cap[prev[v]][v] -= delta;
      cap[v][prev[v]] += delta;
    }
    flow += delta;
  }
  if (flow < 1.0 - 1e-10) return std::nullopt;

  Coupling::Mass m;
  for (const auto& [a, b] : R.pairs) {
    const double v = cap[n + 1 + b][1 + a];  // net flow pushed on (a, b)
    if (v > 1e-15) m[{a, b}] = v;
  }
  double total = 0.0;
  for (const auto& [k, v] : m) total += v;
  for (auto& [k, v] : m) v /= total;
  return Coupling({n, 1}, {n, 1}, std::move(m));
}

// laws of X and Y both conditioned on {X != eStar}, for a square coupling
inline std::pair<Dist, Dist> conditioned_pair(const Coupling& Z, long long eStar) {
  if (!(Z.row_alphabet() == Z.col_alphabet()))
    throw PreconditionError("conditioned_pair: coupling is not square");
  const long long ne = Z.row_alphabet().size();
  if (eStar < 0 || eStar >= ne)
    throw PreconditionError("conditioned_pair: symbol outside alphabet");
  const auto rows = Z.row_sums();
  const double u = rows[eStar];
  if (u > 1.0 - kDistTol)
    throw PreconditionError("conditioned_pair: conditioning event is null");

  std::vector<double> xt(ne, 0.0), yt(ne, 0.0);
  for (long long x = 0; x < ne; ++x)
    if (x != eStar) xt[x] = rows[x] / (1.0 - u);
  for (const auto& [key, v] : Z.mass())
    if (key.first != eStar) yt[key.second] += v / (1.0 - u);
  return {Dist(std::move(xt)), Dist(std::move(yt))};
}

struct CapHReport {
  double hX = 0, hY = 0, hXt = 0, hYt = 0;
  double lower = 0;  // required floor for hXt
  double upper = 0;  // required ceiling for hYt
  bool ok = false;
};

// entropy change under conditioning away one row symbol: conditioning can
// cost X at most the two-cell entropy of the removed mass, and can buy Y at
// most that plus u * log(alphabet size)
inline CapHReport cap_h_check(const Coupling& Z, long long eStar) {
  const auto [xt, yt] = conditioned_pair(Z, eStar);
  const auto [px, py] = marginals(Z);
  const double u = px[static_cast<int>(eStar)];
  CapHReport r;
  r.hX = entropy(px);
  r.hY = entropy(py);
  r.hXt = entropy(xt);
  r.hYt = entropy(yt);
  const double phi = binary_entropy(u);
  r.lower = r.hX - phi;
  r.upper = r.hY + phi + u * std::log(static_cast<double>(Z.row_alphabet().size()));
  r.ok = (r.hXt >= r.lower - 1e-9) && (r.hYt <= r.upper + 1e-9);
  return r;
}

}  // namespace monojoin
