#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "monojoin/coupling.hpp"
#include "monojoin/dist.hpp"
#include "monojoin/rng.hpp"

using namespace monojoin;
using Key = Coupling::Key;

namespace {

Dist random_dist(RandomStream& rs, int n, bool allowZeros = false) {
  std::vector<double> v(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    v[i] = rs.uniform() + 0.05;
    if (allowZeros && rs.uniform() < 0.3) v[i] = 0.0;
    total += v[i];
  }
  if (total == 0.0) v[0] = total = 1.0;
  for (double& x : v) x /= total;
  return Dist(v);
}

Dist push_mass_up(RandomStream& rs, const Dist& q, int moves) {
  std::vector<double> v = q.probs();
  const int n = q.n();
  for (int t = 0; t < moves; ++t) {
    const int i = static_cast<int>(rs.uniform() * (n - 1));
    const int j = i + 1 + static_cast<int>(rs.uniform() * (n - 1 - i));
    const double delta = v[i] * rs.uniform();
    v[i] -= delta;
    v[j] += delta;
  }
  return Dist(v);
}

Coupling random_coupling(RandomStream& rs, int na, int nb) {
  Coupling::Mass m;
  double total = 0.0;
  for (long long a = 0; a < na; ++a)
    for (long long b = 0; b < nb; ++b)
      if (rs.uniform() < 0.5) {
        const double v = rs.uniform() + 0.01;
        m[{a, b}] = v;
        total += v;
      }
  if (m.empty()) {
    m[{0, 0}] = 1.0;
    total = 1.0;
  }
  for (auto& [k, v] : m) v /= total;
  return Coupling({na, 1}, {nb, 1}, std::move(m));
}

// independent restatement of the quantile mass: overlap length of the two
// half-open cdf intervals
double cdf_overlap(const Dist& p, const Dist& q, int a, int b) {
  double fpLo = 0.0, fqLo = 0.0;
  for (int i = 0; i < a; ++i) fpLo += p[i];
  for (int i = 0; i < b; ++i) fqLo += q[i];
  const double lo = std::max(fpLo, fqLo);
  const double hi = std::min(fpLo + p[a], fqLo + q[b]);
  return std::max(0.0, hi - lo);
}

// hall-style feasibility oracle: a relation-respecting coupling with
// marginals (p, q) exists iff no row subset demands more than the mass of
// its neighborhood
bool hall_feasible(const Dist& p, const Dist& q, const Relation& R) {
  const int n = p.n();
  for (int mask = 1; mask < (1 << n); ++mask) {
    double pu = 0.0;
    std::vector<bool> nb(n, false);
    for (int a = 0; a < n; ++a)
      if (mask & (1 << a)) {
        pu += p[a];
        for (int b = 0; b < n; ++b)
          if (R.contains(a, b)) nb[b] = true;
      }
    double qn = 0.0;
    for (int b = 0; b < n; ++b)
      if (nb[b]) qn += q[b];
    if (pu > qn + 1e-10) return false;
  }
  return true;
}

bool edges_acyclic(const std::vector<Key>& edges, int na) {
  // union-find over rows 0..na-1 and cols na..,
  std::vector<int> parent(na + 64);
  for (size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [r, c] : edges) {
    const int u = find(static_cast<int>(r)), v = find(static_cast<int>(na + c));
    if (u == v) return false;
    parent[u] = v;
  }
  return true;
}

// unique solution of the marginal equations on an acyclic edge set, by leaf
// peeling; nullopt when the demands cannot be met nonnegatively
std::optional<std::map<Key, double>> solve_forest(const std::vector<Key>& edges,
                                                  std::vector<double> rowDemand,
                                                  std::vector<double> colDemand) {
  const int na = static_cast<int>(rowDemand.size());
  const int nb = static_cast<int>(colDemand.size());
  auto demand = [&](int v) -> double& {
    return v < na ? rowDemand[v] : colDemand[v - na];
  };
  std::vector<std::set<int>> inc(na + nb);
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    inc[static_cast<int>(edges[e].first)].insert(e);
    inc[na + static_cast<int>(edges[e].second)].insert(e);
  }
  std::map<Key, double> out;
  int remaining = static_cast<int>(edges.size());
  while (remaining > 0) {
    int leaf = -1;
    for (int v = 0; v < na + nb && leaf < 0; ++v)
      if (inc[v].size() == 1) leaf = v;
    if (leaf < 0) return std::nullopt;  // not a forest
    const int e = *inc[leaf].begin();
    double x = demand(leaf);
    if (x < -1e-12) return std::nullopt;
    x = std::max(x, 0.0);
    out[edges[e]] = x;
    const int r = static_cast<int>(edges[e].first);
    const int c = na + static_cast<int>(edges[e].second);
    // subtract from both endpoints; the leaf's demand becomes 0
    rowDemand[static_cast<size_t>(edges[e].first)] -= x;
    colDemand[static_cast<size_t>(edges[e].second)] -= x;
    inc[r].erase(e);
    inc[c].erase(e);
    --remaining;
  }
  for (double d : rowDemand)
    if (std::abs(d) > 1e-9) return std::nullopt;
  for (double d : colDemand)
    if (std::abs(d) > 1e-9) return std::nullopt;
  return out;
}

}  // namespace

TEST_CASE("block alphabet encoding", "[coupling]") {
  const BlockAlphabet a{3, 4};
  REQUIRE(a.size() == 81);
  for (long long v = 0; v < 81; ++v) {
    const auto d = a.decode(v);
    REQUIRE(static_cast<int>(d.size()) == 4);
    REQUIRE(a.encode(d) == v);
  }
  // integer order equals lexicographic order on digit strings
  for (long long v = 0; v + 1 < 81; ++v)
    REQUIRE(a.decode(v) < a.decode(v + 1));

  REQUIRE(a.decode(5) == std::vector<int>{0, 0, 1, 2});
  REQUIRE_THROWS_AS(a.encode({0, 0, 0, 3}), PreconditionError);
  REQUIRE_THROWS_AS((BlockAlphabet{10, 20}).size(), BudgetExceeded);
  REQUIRE_THROWS_AS((BlockAlphabet{0, 3}).size(), PreconditionError);
}

TEST_CASE("coupling construction validates", "[coupling]") {
  const BlockAlphabet two{2, 1};
  REQUIRE_THROWS_AS(Coupling(two, two, {{{0, 2}, 1.0}}), PreconditionError);
  REQUIRE_THROWS_AS(Coupling(two, two, {{{0, 0}, -0.2}, {{1, 1}, 1.2}}),
                    PreconditionError);
  REQUIRE_THROWS_AS(Coupling(two, two, {{{0, 0}, 0.5}}), PreconditionError);

  // zero entries are dropped from the stored support
  const Coupling c(two, two, {{{0, 0}, 0.5}, {{0, 1}, 0.0}, {{1, 1}, 0.5}});
  REQUIRE(c.mass().size() == 2);
  REQUIRE(c.at(0, 1) == 0.0);
  REQUIRE(c.at(1, 1) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("quantile coupling pinned example", "[coupling]") {
  const Dist p(std::vector<double>{0.5, 0.5});
  const Dist q(std::vector<double>{2.0 / 3.0, 1.0 / 3.0});
  const Coupling c = quantile_coupling(p, q);
  REQUIRE(c.at(0, 0) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(c.at(1, 0) == Catch::Approx(1.0 / 6.0).margin(1e-12));
  REQUIRE(c.at(1, 1) == Catch::Approx(1.0 / 3.0).margin(1e-12));
  REQUIRE(c.at(0, 1) == 0.0);
  REQUIRE(c.mass().size() == 3);

  REQUIRE(is_monotone(c));
  REQUIRE(split_elements(c, {0, 1}) == std::set<long long>{1});
  REQUIRE(split_elements(c, {1}).empty());
}

TEST_CASE("quantile coupling matches the cdf overlap law", "[coupling]") {
  RandomStream rs(2026, "quantile-random");
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + static_cast<int>(rs.uniform() * 7);
    const Dist q = random_dist(rs, n, true);
    // half of the draws use a pair that dominates by construction
    const Dist p = (t % 2 == 0) ? random_dist(rs, n, true) : push_mass_up(rs, q, 4);

    const Coupling c = quantile_coupling(p, q);
    const auto [mp, mq] = marginals(c);
    for (int i = 0; i < n; ++i) {
      REQUIRE(std::abs(mp[i] - p[i]) <= 1e-12);
      REQUIRE(std::abs(mq[i] - q[i]) <= 1e-12);
    }
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        REQUIRE(std::abs(c.at(a, b) - cdf_overlap(p, q, a, b)) <= 1e-12);

    std::set<long long> allCols;
    for (long long b = 0; b < n; ++b) allCols.insert(b);
    REQUIRE(static_cast<int>(split_elements(c, allCols).size()) <= n - 1);

    if (dominates(p, q)) REQUIRE(is_monotone(c));
    REQUIRE(respects_relation(c, Relation::full(n)));
  }
}

TEST_CASE("coupling predicates", "[coupling]") {
  const BlockAlphabet two{2, 1};
  const Coupling diag(two, two, {{{0, 0}, 0.5}, {{1, 1}, 0.5}});
  const Coupling anti(two, two, {{{0, 1}, 0.5}, {{1, 0}, 0.5}});
  const Coupling full(two, two,
                      {{{0, 0}, 0.25}, {{0, 1}, 0.25}, {{1, 0}, 0.25}, {{1, 1}, 0.25}});

  REQUIRE(is_monotone(diag));
  REQUIRE_FALSE(is_monotone(anti));
  REQUIRE_FALSE(is_monotone(full));

  REQUIRE(respects_relation(diag, Relation::identity(2)));
  REQUIRE_FALSE(respects_relation(anti, Relation::identity(2)));
  REQUIRE(respects_relation(full, Relation::full(2)));
  REQUIRE(respects_relation(diag, Relation::monotone(2)));

  REQUIRE(is_subordinate(diag, full));
  REQUIRE_FALSE(is_subordinate(full, diag));
  REQUIRE(is_subordinate(full, full));

  // blockwise versions decode digit by digit
  const Coupling blocks(BlockAlphabet{2, 2}, BlockAlphabet{2, 2},
                        {{{2, 1}, 1.0}});  // block 10 over block 01
  REQUIRE_FALSE(is_monotone(blocks));
  REQUIRE(respects_relation(blocks, Relation::full(2)));
  REQUIRE_FALSE(respects_relation(blocks, Relation::monotone(2)));
}

TEST_CASE("marriage refinement leaves acyclic couplings alone", "[coupling]") {
  const Dist p(std::vector<double>{0.5, 0.5});
  const Dist q(std::vector<double>{2.0 / 3.0, 1.0 / 3.0});
  const Coupling c = quantile_coupling(p, q);  // staircase support, no cycles
  const Coupling r = marriage_refine(c, {0, 1});
  REQUIRE(r.mass().size() == c.mass().size());
  for (const auto& [k, v] : c.mass())
    REQUIRE(std::abs(r.at(k.first, k.second) - v) <= 1e-14);

  // empty restriction set: nothing to do
  const Coupling full(BlockAlphabet{2, 1}, BlockAlphabet{2, 1},
                      {{{0, 0}, 0.25}, {{0, 1}, 0.25}, {{1, 0}, 0.25}, {{1, 1}, 0.25}});
  const Coupling r2 = marriage_refine(full, {});
  for (const auto& [k, v] : full.mass())
    REQUIRE(std::abs(r2.at(k.first, k.second) - v) <= 1e-14);
}

TEST_CASE("marriage refinement on the uniform square", "[coupling]") {
  const Coupling full(BlockAlphabet{2, 1}, BlockAlphabet{2, 1},
                      {{{0, 0}, 0.25}, {{0, 1}, 0.25}, {{1, 0}, 0.25}, {{1, 1}, 0.25}});
  const Coupling r = marriage_refine(full, {0, 1});
  REQUIRE(is_subordinate(r, full));
  const auto [mp, mq] = marginals(r);
  REQUIRE(mp[0] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(mq[0] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(split_elements(r, {0, 1}).size() <= 1);
  // two active columns, acyclic support: at most 3 edges survive
  REQUIRE(r.mass().size() <= 3);
}

TEST_CASE("marriage refinement postconditions on random instances", "[coupling]") {
  RandomStream rs(2026, "refine-random");
  for (int t = 0; t < 10000; ++t) {
    const int na = 1 + static_cast<int>(rs.uniform() * 6);
    const int nb = 1 + static_cast<int>(rs.uniform() * 6);
    const Coupling alpha = random_coupling(rs, na, nb);
    std::set<long long> bprime;
    for (long long b = 0; b < nb; ++b)
      if (rs.uniform() < 0.5) bprime.insert(b);

    const Coupling out = marriage_refine(alpha, bprime);
    REQUIRE(is_subordinate(out, alpha));

    const auto ra = alpha.row_sums(), ca = alpha.col_sums();
    const auto ro = out.row_sums(), co = out.col_sums();
    for (int i = 0; i < na; ++i) REQUIRE(std::abs(ra[i] - ro[i]) <= 1e-10);
    for (int j = 0; j < nb; ++j) REQUIRE(std::abs(ca[j] - co[j]) <= 1e-10);

    const auto split = split_elements(out, bprime);
    const long long bound = std::max<long long>(0, (long long)bprime.size() - 1);
    REQUIRE((long long)split.size() <= bound);

    // restricted support graph is acyclic
    std::vector<Key> restricted;
    for (const auto& [k, v] : out.mass())
      if (bprime.count(k.second)) restricted.push_back(k);
    REQUIRE(edges_acyclic(restricted, na));

    // subordination means any relation containing the support is preserved
    if (na == nb) {
      std::set<std::pair<int, int>> pairs;
      for (const auto& [k, v] : alpha.mass())
        pairs.insert({static_cast<int>(k.first), static_cast<int>(k.second)});
      const Relation r(na, std::move(pairs));
      REQUIRE(respects_relation(out, r));
    }

    // deterministic: a second run reproduces the same map
    const Coupling again = marriage_refine(alpha, bprime);
    REQUIRE(again.mass().size() == out.mass().size());
    for (const auto& [k, v] : out.mass())
      REQUIRE(again.at(k.first, k.second) == v);
  }
}

TEST_CASE("marriage refinement reaches a transportation polytope vertex",
          "[coupling][exhaustive]") {
  // all 3x3 mass matrices with denominator <= 5, full restriction set:
  // the result must match one forest-supported solution of the marginal
  // equations exactly (up to float tolerance)
  const int n = 3;
  std::vector<std::array<int, 9>> grids;
  std::array<int, 9> cur{};
  std::function<void(int, int)> gen = [&](int pos, int left) {
    if (pos == 9) {
      if (left < 5) grids.push_back(cur);  // total = 5 - left in 1..5
      return;
    }
    for (int v = 0; v <= left; ++v) {
      cur[pos] = v;
      gen(pos + 1, left - v);
    }
    cur[pos] = 0;
  };
  gen(0, 5);
  REQUIRE(grids.size() == 2001);

  std::set<long long> allCols{0, 1, 2};
  for (const auto& g : grids) {
    int d = 0;
    for (int v : g) d += v;
    Coupling::Mass m;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (g[3 * a + b] > 0) m[{a, b}] = double(g[3 * a + b]) / d;
    const Coupling alpha(BlockAlphabet{n, 1}, BlockAlphabet{n, 1}, std::move(m));

    const Coupling out = marriage_refine(alpha, allCols);

    // enumerate candidate vertices over acyclic subsets of the support
    std::vector<Key> edges;
    for (const auto& [k, v] : alpha.mass()) edges.push_back(k);
    const auto rows = alpha.row_sums(), cols = alpha.col_sums();
    bool matched = false;
    int feasibleVertices = 0;
    for (int mask = 0; mask < (1 << edges.size()); ++mask) {
      std::vector<Key> sub;
      for (size_t e = 0; e < edges.size(); ++e)
        if (mask & (1 << e)) sub.push_back(edges[e]);
      if (!edges_acyclic(sub, n)) continue;
      const auto sol = solve_forest(sub, rows, cols);
      if (!sol) continue;
      ++feasibleVertices;
      bool same = true;
      for (int a = 0; a < n && same; ++a)
        for (int b = 0; b < n && same; ++b) {
          auto it = sol->find({a, b});
          const double want = it == sol->end() ? 0.0 : it->second;
          if (std::abs(out.at(a, b) - want) > 1e-9) same = false;
        }
      if (same) {
        matched = true;
        break;
      }
    }
    REQUIRE(feasibleVertices > 0);
    REQUIRE(matched);

    // partial restriction sets: postconditions and restricted acyclicity
    for (int bmask = 0; bmask < 8; ++bmask) {
      std::set<long long> bprime;
      for (int b = 0; b < 3; ++b)
        if (bmask & (1 << b)) bprime.insert(b);
      const Coupling o2 = marriage_refine(alpha, bprime);
      REQUIRE(is_subordinate(o2, alpha));
      const auto r2 = o2.row_sums(), c2 = o2.col_sums();
      for (int i = 0; i < n; ++i) REQUIRE(std::abs(rows[i] - r2[i]) <= 1e-10);
      for (int j = 0; j < n; ++j) REQUIRE(std::abs(cols[j] - c2[j]) <= 1e-10);
      const long long bound = std::max<long long>(0, (long long)bprime.size() - 1);
      REQUIRE((long long)split_elements(o2, bprime).size() <= bound);
      std::vector<Key> restricted;
      for (const auto& [k, v] : o2.mass())
        if (bprime.count(k.second)) restricted.push_back(k);
      REQUIRE(edges_acyclic(restricted, n));
    }
  }
}

TEST_CASE("product powers multiply masses and concatenate blocks", "[coupling]") {
  const Dist p(std::vector<double>{0.5, 0.5});
  const Dist q(std::vector<double>{2.0 / 3.0, 1.0 / 3.0});
  const Coupling c = quantile_coupling(p, q);

  const Coupling c1 = product_power(c, 1);
  for (const auto& [k, v] : c.mass())
    REQUIRE(c1.at(k.first, k.second) == Catch::Approx(v).margin(1e-15));

  const Coupling c2 = product_power(c, 2);
  REQUIRE((c2.row_alphabet() == BlockAlphabet{2, 2}));
  REQUIRE((c2.col_alphabet() == BlockAlphabet{2, 2}));
  REQUIRE(c2.mass().size() == 9);
  for (const auto& [ka, va] : c.mass())
    for (const auto& [kb, vb] : c.mass()) {
      const long long r = ka.first * 2 + kb.first;
      const long long s = ka.second * 2 + kb.second;
      REQUIRE(c2.at(r, s) == Catch::Approx(va * vb).margin(1e-14));
    }

  const auto [m2p, m2q] = marginals(c2);
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2)
      REQUIRE(m2p[2 * a1 + a2] == Catch::Approx(p[a1] * p[a2]).margin(1e-12));

  REQUIRE_THROWS_AS(product_power(c, 20, 1000), BudgetExceeded);
  REQUIRE_THROWS_AS(product_power(c, 0), PreconditionError);
}

TEST_CASE("relation domination pinned cases", "[coupling]") {
  const Dist p(std::vector<double>{0.5, 0.5});
  const Dist q(std::vector<double>{2.0 / 3.0, 1.0 / 3.0});

  REQUIRE(r_dominates(p, q, Relation::full(2)).has_value());
  REQUIRE(r_dominates(p, q, Relation::monotone(2)).has_value());
  REQUIRE_FALSE(r_dominates(q, p, Relation::monotone(2)).has_value());
  REQUIRE_FALSE(r_dominates(p, q, Relation::identity(2)).has_value());
  REQUIRE(r_dominates(p, p, Relation::identity(2)).has_value());
  REQUIRE_FALSE(r_dominates(p, q, Relation(2, {})).has_value());
  REQUIRE_THROWS_AS(r_dominates(p, Dist::uniform(3), Relation::full(2)),
                    PreconditionError);
  REQUIRE_THROWS_AS(r_dominates(p, q, Relation::full(3)), PreconditionError);

  const auto w = r_dominates(p, q, Relation::monotone(2));
  REQUIRE(is_monotone(*w));
  const auto [wp, wq] = marginals(*w);
  for (int i = 0; i < 2; ++i) {
    REQUIRE(std::abs(wp[i] - p[i]) <= 1e-9);
    REQUIRE(std::abs(wq[i] - q[i]) <= 1e-9);
  }
}

TEST_CASE("relation domination under the order relation matches prefix sums",
          "[coupling][exhaustive]") {
  // exhaustive: denominator <= 4 on 2 or 3 symbols; a monotone coupling
  // exists exactly when every prefix sum of p is below that of q
  for (int n = 2; n <= 3; ++n) {
    const Relation mono = Relation::monotone(n);
    std::vector<std::vector<double>> vecs;
    for (int d = 1; d <= 4; ++d) {
      std::vector<int> comp(n, 0);
      std::function<void(int, int)> gen = [&](int pos, int left) {
        if (pos == n - 1) {
          comp[pos] = left;
          std::vector<double> v(n);
          for (int i = 0; i < n; ++i) v[i] = double(comp[i]) / d;
          vecs.push_back(v);
          return;
        }
        for (int x = 0; x <= left; ++x) {
          comp[pos] = x;
          gen(pos + 1, left - x);
        }
      };
      gen(0, d);
    }
    for (const auto& vp : vecs)
      for (const auto& vq : vecs) {
        const Dist p(vp), q(vq);
        const bool dom = dominates(p, q);
        const auto w = r_dominates(p, q, mono);
        REQUIRE(w.has_value() == dom);
        if (w) {
          REQUIRE(is_monotone(*w));
          REQUIRE(respects_relation(*w, mono));
        }
      }
  }
}

TEST_CASE("relation domination agrees with the hall oracle", "[coupling]") {
  RandomStream rs(2026, "hall-random");
  for (int t = 0; t < 2000; ++t) {
    const int n = 2 + static_cast<int>(rs.uniform() * 5);
    const Dist p = random_dist(rs, n, true);
    const Dist q = random_dist(rs, n, true);
    std::set<std::pair<int, int>> pairs;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (rs.uniform() < 0.4) pairs.insert({a, b});
    const Relation R(n, std::move(pairs));

    const auto w = r_dominates(p, q, R);
    REQUIRE(w.has_value() == hall_feasible(p, q, R));
    if (w) {
      REQUIRE(respects_relation(*w, R));
      const auto [wp, wq] = marginals(*w);
      for (int i = 0; i < n; ++i) {
        REQUIRE(std::abs(wp[i] - p[i]) <= 1e-9);
        REQUIRE(std::abs(wq[i] - q[i]) <= 1e-9);
      }
    }
  }
}

TEST_CASE("conditioning away one row symbol", "[coupling]") {
  const Dist p(std::vector<double>{0.5, 0.5});
  const Dist q(std::vector<double>{2.0 / 3.0, 1.0 / 3.0});
  const Coupling Z = quantile_coupling(p, q);

  const auto [xt, yt] = conditioned_pair(Z, 0);
  REQUIRE(xt[0] == 0.0);
  REQUIRE(xt[1] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(yt[0] == Catch::Approx(1.0 / 3.0).margin(1e-12));
  REQUIRE(yt[1] == Catch::Approx(2.0 / 3.0).margin(1e-12));

  const BlockAlphabet two{2, 1};
  const Coupling point(two, two, {{{0, 0}, 1.0}});
  REQUIRE_THROWS_AS(conditioned_pair(point, 0), PreconditionError);
  REQUIRE_THROWS_AS(conditioned_pair(Z, 5), PreconditionError);

  const Coupling rect(two, BlockAlphabet{3, 1}, {{{0, 0}, 1.0}});
  REQUIRE_THROWS_AS(conditioned_pair(rect, 0), PreconditionError);
}

TEST_CASE("entropy caps after conditioning hold on random couplings",
          "[coupling]") {
  RandomStream rs(2026, "cap-h-random");
  int checked = 0;
  while (checked < 10000) {
    const int n = 2 + static_cast<int>(rs.uniform() * 5);
    const Coupling Z = random_coupling(rs, n, n);
    const long long eStar = static_cast<long long>(rs.uniform() * n);
    if (Z.row_sums()[eStar] > 1.0 - 1e-9) continue;
    const CapHReport r = cap_h_check(Z, eStar);
    REQUIRE(r.ok);
    REQUIRE(r.hXt >= r.lower - 1e-9);
    REQUIRE(r.hYt <= r.upper + 1e-9);
    ++checked;
  }
}
