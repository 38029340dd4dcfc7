#include "vidup/kernels/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace vidup::kernels {

const KernelTable* avx2_table_unchecked();

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* avx2_table() {
  static const KernelTable* table = cpu_has_avx2_fma() ? avx2_table_unchecked() : nullptr;
  return table;
}

namespace {

const KernelTable& select() {
  const char* env = std::getenv("VIDUP_SIMD");
  const std::string_view want = env ? env : "";
  if (want == "scalar") return scalar_table();
  if (const KernelTable* t = avx2_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace vidup::kernels
