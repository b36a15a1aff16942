#include <cstdlib>
#include <string>

#include "prodehaze/kernels/kernels.hpp"

namespace prodehaze::kernels {

#if defined(__x86_64__) || defined(_M_X64)
#define PRODEHAZE_HAVE_AVX2_TU 1
const KernelTable& avx2_table_unchecked();
#else
#define PRODEHAZE_HAVE_AVX2_TU 0
#endif

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
  }
  return "unknown";
}

Isa detect_isa() {
#if PRODEHAZE_HAVE_AVX2_TU && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::kAvx2;
#endif
  return Isa::kScalar;
}

const KernelTable* avx2_table() {
#if PRODEHAZE_HAVE_AVX2_TU
  if (detect_isa() == Isa::kAvx2) return &avx2_table_unchecked();
#endif
  return nullptr;
}

const KernelTable& active() {
  static const KernelTable& table = [] () -> const KernelTable& {
    const char* env = std::getenv("PRODEHAZE_SIMD");
    const std::string want = env ? env : "auto";
    if (want != "scalar") {
      if (const KernelTable* t = avx2_table()) return *t;
    }
    return scalar_table();
  }();
  return table;
}

}  // namespace prodehaze::kernels
