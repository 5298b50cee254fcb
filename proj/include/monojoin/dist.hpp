#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace monojoin {

inline constexpr double kDistTol = 1e-12;

// Neumaier-compensated accumulator. Mass validations must not loosen with the
// number of summands, and naive summation drifts past kDistTol somewhere
// around a million entries.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Probability vector on {0, ..., n-1}. Zero-mass symbols are kept in the
// alphabet; construction checks the total to 1e-12 and then renormalizes
// exactly so downstream sums start from total mass 1.
class Dist {
 public:
  explicit Dist(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw PreconditionError("Dist: empty alphabet");
    CompensatedSum acc;
    for (double v : probs_) {
      if (!(v >= 0.0)) throw PreconditionError("Dist: negative or nan entry");
      acc.add(v);
    }
    const double total = acc.value();
    if (std::abs(total - 1.0) > kDistTol)
      throw PreconditionError("Dist: entries do not sum to 1");
    for (double& v : probs_) v /= total;
  }

  int n() const { return static_cast<int>(probs_.size()); }
  double operator[](int i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

  static Dist uniform(int n) {
    return Dist(std::vector<double>(n, 1.0 / n));
  }
  static Dist point_mass(int n, int at) {
    std::vector<double> v(n, 0.0);
    v.at(at) = 1.0;
    return Dist(std::move(v));
  }

 private:
  std::vector<double> probs_;
};

// -sum p_i log p_i in nats, with 0 log 0 = 0
inline double entropy(const Dist& p) {
  double h = 0.0;
  for (double v : p.probs())
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

// entropy of a two-cell partition with masses t and 1-t
inline double binary_entropy(double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw PreconditionError("binary_entropy: argument outside [0,1]");
  double h = 0.0;
  if (t > 0.0) h -= t * std::log(t);
  if (t < 1.0) h -= (1.0 - t) * std::log(1.0 - t);
  return h;
}

// true iff every prefix sum of p is <= the matching prefix sum of q, i.e.
// p is stochastically larger than q on the shared totally ordered alphabet
inline bool dominates(const Dist& p, const Dist& q) {
  if (p.n() != q.n())
    throw PreconditionError("dominates: alphabet sizes differ");
  double cp = 0.0, cq = 0.0;
  for (int i = 0; i < p.n(); ++i) {
    cp += p[i];
    cq += q[i];
    if (cp > cq + kDistTol) return false;
  }
  return true;
}

// Finite relation on [n] x [n]; pair (a, b) present means mass on (a, b)
// is allowed by relation-respecting couplings.
struct Relation {
  int n = 0;
  std::set<std::pair<int, int>> pairs;

  Relation(int n_, std::set<std::pair<int, int>> pairs_)
      : n(n_), pairs(std::move(pairs_)) {
    if (n <= 0) throw PreconditionError("Relation: empty alphabet");
    for (const auto& [a, b] : pairs)
      if (a < 0 || a >= n || b < 0 || b >= n)
        throw PreconditionError("Relation: pair outside alphabet");
  }

  bool contains(int a, int b) const { return pairs.count({a, b}) != 0; }

  static Relation full(int n) {
    std::set<std::pair<int, int>> s;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) s.insert({a, b});
    return Relation(n, std::move(s));
  }
  static Relation identity(int n) {
    std::set<std::pair<int, int>> s;
    for (int a = 0; a < n; ++a) s.insert({a, a});
    return Relation(n, std::move(s));
  }
  // the coordinate order: mass allowed where the row symbol dominates
  static Relation monotone(int n) {
    std::set<std::pair<int, int>> s;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b <= a; ++b) s.insert({a, b});
    return Relation(n, std::move(s));
  }
};

}  // namespace monojoin
