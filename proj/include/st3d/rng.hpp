#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace st3d {

// Deterministic pseudo-random source. The engine is std::mt19937_64; the
// value mappings below are fixed here (not delegated to std distributions)
// so a saved engine state reproduces the exact stream after restore:
//   uniform():     (next_u64 >> 11) * 2^-53, in [0,1)
//   uniform_int(n): threshold-rejected modulo, unbiased over [0,n)
//   normal():      Box-Muller, one value per call, no cached spare
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  double uniform();
  int64_t uniform_int(int64_t n);  // [0, n), n >= 1
  double normal();                 // standard normal

  // Fisher-Yates over [0, n) index space.
  std::vector<int64_t> permutation(int64_t n);

  std::string serialize() const;
  void deserialize(const std::string& blob);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace st3d
