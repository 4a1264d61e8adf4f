#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace lumos {

// All randomness in the project flows through this wrapper so runs are
// reproducible from a single seed and the engine state can be checkpointed.
// Draw helpers are hand-rolled (not std::*_distribution) because their output
// must be stable across standard library versions.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed) { reseed(seed); }

  void reseed(uint64_t seed) { eng_.seed(seed); }

  uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return (double)(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), n > 0
  int64_t uniform_int(int64_t n) { return (int64_t)(eng_() % (uint64_t)n); }

  // Box-Muller, one value per call (the sine partner is discarded so state
  // advances by exactly two raw draws per normal)
  double normal(double mean = 0.0, double stddev = 1.0);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = (int64_t)v.size() - 1; i > 0; --i) {
      const int64_t j = uniform_int(i + 1);
      std::swap(v[(size_t)i], v[(size_t)j]);
    }
  }

  std::string save_state() const;
  void load_state(const std::string& s);

  // splitmix64 mix of (seed, index); decorrelates per-item streams derived
  // from one master seed
  static uint64_t derive(uint64_t seed, uint64_t index);

 private:
  std::mt19937_64 eng_;
};

}  // namespace lumos
