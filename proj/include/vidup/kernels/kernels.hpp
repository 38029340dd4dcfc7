#pragma once
// Arithmetic inner loops used by the network layers and attacks.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2/FMA implementation compiled in its own translation unit. The active
// table is chosen once at startup from CPUID; VIDUP_SIMD=scalar|avx2 overrides.

#include <cstddef>
#include <string_view>

namespace vidup::kernels {

enum class Trans { No, Yes };

// Register tile of the GEMM micro-kernel. Both variants share the packing
// layout, so the tile is fixed across implementations.
inline constexpr int kGemmMR = 6;
inline constexpr int kGemmNR = 16;

struct KernelTable {
  std::string_view name;

  // acc[MR*NR] = sum_k a_panel[k*MR + i] * b_panel[k*NR + j], row-major tile.
  void (*gemm_micro)(int kc, const float* a_panel, const float* b_panel, float* acc);

  // y += a * x
  void (*axpy)(std::size_t n, float a, const float* x, float* y);
  // sum_i x[i] * y[i], accumulated in double
  double (*dot)(std::size_t n, const float* x, const float* y);
  // sum_i |x[i]|, accumulated in double
  double (*abs_sum)(std::size_t n, const float* x);
  // out = clamp(x + p, lo, hi)
  void (*add_clamp)(std::size_t n, const float* x, const float* p, float* out, float lo, float hi);
  // y = max(x, 0)
  void (*relu_forward)(std::size_t n, const float* x, float* y);
  // dx = y > 0 ? dy : 0
  void (*relu_backward)(std::size_t n, const float* y, const float* dy, float* dx);
  // y = x * scale + shift
  void (*scale_shift)(std::size_t n, const float* x, float scale, float shift, float* y);
  // delta = clamp(delta + step * sign(grad), -bound, bound)
  void (*sign_step_clip)(std::size_t n, const float* grad, float step, float bound, float* delta);
  // One Adam moment/parameter update with precomputed bias corrections.
  void (*adam_update)(std::size_t n, float* param, const float* grad, float* m, float* v, float lr,
                      float beta1, float beta2, float eps, float bias_c1, float bias_c2);
};

const KernelTable& scalar_table();
// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

// Table selected for this process.
const KernelTable& active();

bool cpu_has_avx2_fma();

// C = alpha * op(A) * op(B) + beta * C, all row-major. op(A) is M x K, op(B) is K x N.
// When beta == 0, C is not read.
void sgemm(Trans trans_a, Trans trans_b, int m, int n, int k, float alpha, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc);
// Same, with an explicit kernel table (used for equivalence testing).
void sgemm(const KernelTable& table, Trans trans_a, Trans trans_b, int m, int n, int k, float alpha,
           const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc);

}  // namespace vidup::kernels
