#pragma once

#include <array>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "coupling.hpp"
#include "dist.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace monojoin {

// Conditional law along one coordinate of a coupling: ascending support
// symbols with their conditional probabilities. cum[i] is the conditional
// cdf after symbol sym[i]; symbol sym[i] owns the half-open u-interval
// [cum[i-1], cum[i]).
struct CondLaw {
  std::vector<long long> sym;
  std::vector<double> prob;
  std::vector<double> cum;

  long long invert(double u) const {
    for (size_t i = 0; i < cum.size(); ++i)
      if (u < cum[i]) return sym[i];
    return sym.back();  // u at or beyond the top boundary
  }
};

namespace detail {

inline void finalize_cond(std::map<long long, CondLaw>& laws,
                          const std::map<long long, double>& weight) {
  for (auto& [key, law] : laws) {
    const double w = weight.at(key);
    double c = 0.0;
    law.cum.reserve(law.prob.size());
    for (double& p : law.prob) {
      p /= w;
      c += p;
      law.cum.push_back(c);
    }
  }
}

}  // namespace detail

// law of the row symbol given each positive-mass column symbol
inline std::map<long long, CondLaw> col_conditionals(const Coupling& Z) {
  std::map<long long, double> weight;
  for (const auto& [k, v] : Z.mass()) weight[k.second] += v;
  std::map<long long, CondLaw> laws;
  // row-major iteration visits each column's rows in ascending order
  for (const auto& [k, v] : Z.mass()) {
    CondLaw& law = laws[k.second];
    law.sym.push_back(k.first);
    law.prob.push_back(v);
  }
  detail::finalize_cond(laws, weight);
  return laws;
}

// law of the column symbol given each positive-mass row symbol
inline std::map<long long, CondLaw> row_conditionals(const Coupling& Z) {
  std::map<long long, double> weight;
  for (const auto& [k, v] : Z.mass()) weight[k.first] += v;
  std::map<long long, CondLaw> laws;
  for (const auto& [k, v] : Z.mass()) {
    CondLaw& law = laws[k.first];
    law.sym.push_back(k.second);
    law.prob.push_back(v);
  }
  detail::finalize_cond(laws, weight);
  return laws;
}

// Joint law of two coupled pairs (X1', Y1', X2', Y2') produced by the
// star-coupling: X2' and Y1' are drawn independently with the input marginal
// laws, and one shared uniform is pushed through the conditional quantile
// maps of X1 given Y1 = f1 and of Y2 given X2 = e2.
struct StarJoint {
  BlockAlphabet e1, f1, e2, f2;
  std::map<std::array<long long, 4>, double> mass;
};

inline StarJoint star_couple(const Coupling& Z1, const Coupling& Z2,
                             long long supportBudget = 1LL << 22) {
  std::map<long long, double> wf1, we2;
  for (const auto& [k, v] : Z1.mass()) wf1[k.second] += v;
  for (const auto& [k, v] : Z2.mass()) we2[k.first] += v;
  const auto s = col_conditionals(Z1);   // e1 given f1
  const auto t = row_conditionals(Z2);   // f2 given e2

  StarJoint W{Z1.row_alphabet(), Z1.col_alphabet(), Z2.row_alphabet(),
              Z2.col_alphabet(), {}};
  double total = 0.0;
  for (const auto& [f1, sf] : s)
    for (const auto& [e2, te] : t) {
      const double scale = wf1.at(f1) * we2.at(e2);
      // overlap walk of the two conditional cdf partitions of [0, 1)
      size_t i = 0, j = 0;
      double lo = 0.0;
      while (i < sf.sym.size() && j < te.sym.size()) {
        const double hi = std::min(sf.cum[i], te.cum[j]);
        const double len = hi - lo;
        if (len > kMassDust) {
          W.mass[{sf.sym[i], f1, e2, te.sym[j]}] += scale * len;
          total += scale * len;
          if (static_cast<long long>(W.mass.size()) > supportBudget)
            throw BudgetExceeded("star_couple: support budget exceeded");
        }
        lo = hi;
        const bool advS = sf.cum[i] <= te.cum[j];
        const bool advT = te.cum[j] <= sf.cum[i];
        if (advS) ++i;
        if (advT) ++j;
      }
    }
  for (auto& [k, v] : W.mass) v /= total;
  return W;
}

inline Coupling star_project_12(const StarJoint& W) {
  Coupling::Mass m;
  for (const auto& [k, v] : W.mass) m[{k[0], k[1]}] += v;
  return Coupling(W.e1, W.f1, std::move(m));
}

inline Coupling star_project_34(const StarJoint& W) {
  Coupling::Mass m;
  for (const auto& [k, v] : W.mass) m[{k[2], k[3]}] += v;
  return Coupling(W.e2, W.f2, std::move(m));
}

// repackage over concatenated blocks, X-product lexicographically ordered
inline Coupling star_flatten(const StarJoint& W) {
  if (W.e1.base != W.e2.base || W.f1.base != W.f2.base)
    throw PreconditionError("star_flatten: mismatched block bases");
  const BlockAlphabet rx{W.e1.base, W.e1.length + W.e2.length};
  const BlockAlphabet ry{W.f1.base, W.f1.length + W.f2.length};
  (void)rx.size();
  (void)ry.size();
  const long long xStep = W.e2.size(), yStep = W.f2.size();
  Coupling::Mass m;
  for (const auto& [k, v] : W.mass)
    m[{k[0] * xStep + k[2], k[1] * yStep + k[3]}] += v;
  return Coupling(rx, ry, std::move(m));
}

namespace detail {

// mutual information (nats) between two coordinate projections of the joint
template <typename KeyA, typename KeyB, typename FA, typename FB>
double star_mi(const StarJoint& W, FA&& fa, FB&& fb) {
  std::map<KeyA, double> pa;
  std::map<KeyB, double> pb;
  std::map<std::pair<KeyA, KeyB>, double> pab;
  for (const auto& [k, v] : W.mass) {
    pa[fa(k)] += v;
    pb[fb(k)] += v;
    pab[{fa(k), fb(k)}] += v;
  }
  double mi = 0.0;
  for (const auto& [k, v] : pab)
    if (v > 0.0) mi += v * std::log(v / (pa.at(k.first) * pb.at(k.second)));
  return mi;
}

}  // namespace detail

// I(Y1' ; (X2', Y2')): zero for every star-coupling
inline double star_mi_y1(const StarJoint& W) {
  using B = std::pair<long long, long long>;
  return detail::star_mi<long long, B>(
      W, [](const auto& k) { return k[1]; },
      [](const auto& k) { return B{k[2], k[3]}; });
}

// I(X2' ; (X1', Y1')): zero for every star-coupling
inline double star_mi_x2(const StarJoint& W) {
  using B = std::pair<long long, long long>;
  return detail::star_mi<long long, B>(
      W, [](const auto& k) { return k[2]; },
      [](const auto& k) { return B{k[0], k[1]}; });
}

// Left-to-right iterated star-coupling, flattening each stage onto product
// blocks: W_1 = star(Z0, Zs[0]), W_j = star(W_{j-1}, Zs[j-1]). The X and Y
// marginals of the result are the independent products of the input
// marginals.
inline Coupling iterative_star(const Coupling& Z0,
                               const std::vector<Coupling>& Zs,
                               long long supportBudget = 1LL << 22) {
  Coupling W = Z0;
  for (const Coupling& Z : Zs) W = star_flatten(star_couple(W, Z, supportBudget));
  return W;
}

// One draw from the star-coupling; consumes exactly three uniforms in the
// pinned order V2 (for X2'), V1 (for Y1'), U (shared by both conditional
// quantile maps).
class StarSampler {
 public:
  StarSampler(const Coupling& Z1, const Coupling& Z2)
      : s_(col_conditionals(Z1)), t_(row_conditionals(Z2)) {
    for (const auto& [k, v] : Z1.mass()) y1_[k.second] += v;
    for (const auto& [k, v] : Z2.mass()) x2_[k.first] += v;
    y1cdf_ = build_cdf(y1_);
    x2cdf_ = build_cdf(x2_);
  }

  std::array<long long, 4> draw(RandomStream& rng) const {
    const double v2 = rng.uniform();
    const double v1 = rng.uniform();
    const double u = rng.uniform();
    const long long e2 = invert_cdf(x2cdf_, v2);
    const long long f1 = invert_cdf(y1cdf_, v1);
    const long long f2 = t_.at(e2).invert(u);
    const long long e1 = s_.at(f1).invert(u);
    return {e1, f1, e2, f2};
  }

 private:
  using SparseCdf = std::vector<std::pair<long long, double>>;

  static SparseCdf build_cdf(const std::map<long long, double>& w) {
    SparseCdf out;
    double c = 0.0;
    for (const auto& [k, v] : w) {
      c += v;
      out.push_back({k, c});
    }
    return out;
  }

  static long long invert_cdf(const SparseCdf& cdf, double u) {
    for (const auto& [k, c] : cdf)
      if (u < c) return k;
    return cdf.back().first;
  }

  std::map<long long, CondLaw> s_, t_;
  std::map<long long, double> y1_, x2_;
  SparseCdf y1cdf_, x2cdf_;
};

inline std::array<long long, 4> star_sample(RandomStream& rng, const Coupling& Z1,
                                            const Coupling& Z2) {
  return StarSampler(Z1, Z2).draw(rng);
}

}  // namespace monojoin
