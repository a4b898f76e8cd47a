#include "gregait/common.hpp"

#include <atomic>
#include <cstdint>
#include <cstring>
#include <stdexcept>

namespace gregait {

namespace {
std::atomic<Exec> g_exec{Exec::Parallel};
}

Exec exec_mode() { return g_exec.load(std::memory_order_relaxed); }
void set_exec_mode(Exec m) { g_exec.store(m, std::memory_order_relaxed); }

void fail(const std::string& msg) { throw std::runtime_error(msg); }

uint64_t hash_bytes(const void* data, size_t n, uint64_t seed) {
  // FNV-1a folded with the seed; stable across platforms
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull ^ seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<uint64_t>(p[i]);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace gregait
