#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gregait {

// Execution policy for the compute kernels. Serial runs the reference
// loops; Parallel dispatches to the OpenMP kernels. Serial is the
// deterministic mode used by the reproducibility tests.
enum class Exec { Serial, Parallel };

Exec exec_mode();
void set_exec_mode(Exec m);

[[noreturn]] void fail(const std::string& msg);

#define GG_CHECK(cond, msg)                        \
  do {                                             \
    if (!(cond)) {                                 \
      std::ostringstream oss_;                     \
      oss_ << msg;                                 \
      ::gregait::fail(oss_.str());                 \
    }                                              \
  } while (0)

// splitmix64, used to derive independent streams and content hashes.
struct SplitMix64 {
  uint64_t state = 0;
  explicit SplitMix64(uint64_t seed) : state(seed) {}
  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // uniform in [0,1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  // standard normal via Box-Muller on two uniforms
  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

inline uint64_t hash_mix(uint64_t h, uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

uint64_t hash_bytes(const void* data, size_t n, uint64_t seed = 0x9ae16a3b2f90404full);

// Deterministic blocked sum: partial sums over fixed-size blocks are
// combined in block order, so the result does not depend on how many
// threads ran. The serial path is a plain running sum.
template <class F>
double block_sum(int64_t n, F f) {
  if (exec_mode() == Exec::Serial) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += f(i);
    return s;
  }
  constexpr int64_t kBlock = 4096;
  const int64_t nb = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(static_cast<size_t>(nb), 0.0);
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < nb; ++b) {
    const int64_t lo = b * kBlock;
    const int64_t hi = std::min(n, lo + kBlock);
    double s = 0.0;
    for (int64_t i = lo; i < hi; ++i) s += f(i);
    partial[static_cast<size_t>(b)] = s;
  }
  double s = 0.0;
  for (int64_t b = 0; b < nb; ++b) s += partial[static_cast<size_t>(b)];
  return s;
}

}  // namespace gregait
