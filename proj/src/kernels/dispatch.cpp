#include <cstdlib>
#include <string_view>

#include "mmsada/kernels.hpp"

namespace mmsada::kernels {
namespace {

bool cpu_has_avx2_fma() {
#if defined(MMSADA_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& select_table() {
  const char* env = std::getenv("MMSADA_KERNELS");
  const std::string_view requested = env ? env : "";
  if (requested == "scalar") return scalar_kernels();
  if (const KernelTable* simd = avx2_kernels()) return *simd;
  return scalar_kernels();
}

}  // namespace

const KernelTable& scalar_kernels() { return detail::scalar_table(); }

const KernelTable* avx2_kernels() {
  static const bool available = cpu_has_avx2_fma();
  return available ? &detail::avx2_table() : nullptr;
}

const KernelTable& active_kernels() {
  static const KernelTable& table = select_table();
  return table;
}

}  // namespace mmsada::kernels
