#include <cstdlib>
#include <string_view>

#include "qrnet/simd/kernels.hpp"

namespace qrnet::simd {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable& resolve() {
  if (const char* env = std::getenv("QRNET_SIMD");
      env != nullptr && std::string_view(env) == "scalar") {
    return scalar::table();
  }
  if (cpu_has_avx2()) {
    if (const KernelTable* t = avx2::table()) return *t;
  }
  return scalar::table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = resolve();
  return table;
}

}  // namespace qrnet::simd
