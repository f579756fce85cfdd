#include "st3d/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "st3d/check.hpp"

namespace st3d {

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int64_t Rng::uniform_int(int64_t n) {
  ST3D_CHECK(n >= 1, "rng: uniform_int bound " << n << " must be >= 1");
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t threshold = (0 - un) % un;  // 2^64 mod n
  uint64_t x;
  do {
    x = next_u64();
  } while (x < threshold);
  return static_cast<int64_t>(x % un);
}

double Rng::normal() {
  // u1 in (0,1] so the log is finite; the sin twin is dropped.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<int64_t> Rng::permutation(int64_t n) {
  std::vector<int64_t> p(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) p[i] = i;
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = uniform_int(i + 1);
    std::swap(p[i], p[j]);
  }
  return p;
}

std::string Rng::serialize() const {
  std::ostringstream oss;
  oss << engine_;
  return oss.str();
}

void Rng::deserialize(const std::string& blob) {
  std::istringstream iss(blob);
  iss >> engine_;
  ST3D_CHECK(!iss.fail(), "rng: malformed state blob");
}

}  // namespace st3d
