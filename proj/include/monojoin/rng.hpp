#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace monojoin {

// splitmix64 step: advances the state by the golden gamma and returns a
// mixed output word. Used only to expand seeds into generator state.
inline std::uint64_t splitmix64_next(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// xoshiro256++ with a documented stream derivation: the generator state is
// produced by splitmix64 runs seeded from (master seed, fnv1a(label), index),
// so any sub-experiment is reproducible from the master seed alone.
// No std::random distributions are used anywhere; all sampling goes through
// uniform() and explicit cdf walks, which keeps output byte-identical across
// platforms.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t master, std::string_view label = "",
                        std::uint64_t index = 0) {
    std::uint64_t s = master;
    s = splitmix64_next(s) ^ fnv1a64(label);
    s = splitmix64_next(s) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    for (auto& w : state_) w = splitmix64_next(s);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform on [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // smallest index i with u < probs[0] + ... + probs[i]; if rounding makes the
  // cdf walk run off the end, the last positive-mass index is returned
  int categorical(const std::vector<double>& probs) {
    const double u = uniform();
    double acc = 0.0;
    int lastPositive = -1;
    for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
      if (probs[i] <= 0.0) continue;
      lastPositive = i;
      acc += probs[i];
      if (u < acc) return i;
    }
    if (lastPositive < 0) throw PreconditionError("categorical: no positive mass");
    return lastPositive;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace monojoin
