#pragma once

// Data-parallel inner loops behind a runtime-selected function table.
//
// Every kernel has a scalar reference implementation; the AVX2 variants are
// compiled into their own translation unit with -mavx2 -mfma and selected at
// first use when the CPU supports them. Setting PRODEHAZE_SIMD=scalar forces
// the reference path. Reductions may differ from the scalar path in the last
// few ulps (different summation order); element-wise min is bit-exact.

#include <cstddef>
#include <string_view>

namespace prodehaze::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view to_string(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = min(x, y)
  void (*min_inplace)(const double* x, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*sum_sq_diff)(const double* a, const double* b, std::size_t n);
  double (*sum_abs_diff)(const double* a, const double* b, std::size_t n);
  // Row-major accumulating products, all with explicit leading dimensions.
  // C(m x n) += A(m x k) * B(k x n)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);
  // C(m x n) += A(k x m)^T * B(k x n)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);
  // C(m x n) += A(m x k) * B(n x k)^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);
};

const KernelTable& scalar_table();
// Null when the variant was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_table();

Isa detect_isa();

// The table used by the library. Chosen once; PRODEHAZE_SIMD overrides.
const KernelTable& active();

}  // namespace prodehaze::kernels
