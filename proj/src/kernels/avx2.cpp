// Compiled with -mavx2 -mfma. Keep this file free of standard-library inline
// code: anything instantiated here could be merged into non-AVX callers.
#include "vidup/kernels/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define VIDUP_HAVE_AVX2_TU 1
#endif

namespace vidup::kernels {

#ifdef VIDUP_HAVE_AVX2_TU
namespace {

static_assert(kGemmMR == 6 && kGemmNR == 16, "AVX2 micro-kernel is written for a 6x16 tile");

void gemm_micro(int kc, const float* a_panel, const float* b_panel, float* acc) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (int k = 0; k < kc; ++k) {
    const __m256 b0 = _mm256_loadu_ps(b_panel);
    const __m256 b1 = _mm256_loadu_ps(b_panel + 8);
    __m256 a = _mm256_broadcast_ss(a_panel + 0);
    c00 = _mm256_fmadd_ps(a, b0, c00);
    c01 = _mm256_fmadd_ps(a, b1, c01);
    a = _mm256_broadcast_ss(a_panel + 1);
    c10 = _mm256_fmadd_ps(a, b0, c10);
    c11 = _mm256_fmadd_ps(a, b1, c11);
    a = _mm256_broadcast_ss(a_panel + 2);
    c20 = _mm256_fmadd_ps(a, b0, c20);
    c21 = _mm256_fmadd_ps(a, b1, c21);
    a = _mm256_broadcast_ss(a_panel + 3);
    c30 = _mm256_fmadd_ps(a, b0, c30);
    c31 = _mm256_fmadd_ps(a, b1, c31);
    a = _mm256_broadcast_ss(a_panel + 4);
    c40 = _mm256_fmadd_ps(a, b0, c40);
    c41 = _mm256_fmadd_ps(a, b1, c41);
    a = _mm256_broadcast_ss(a_panel + 5);
    c50 = _mm256_fmadd_ps(a, b0, c50);
    c51 = _mm256_fmadd_ps(a, b1, c51);
    a_panel += 6;
    b_panel += 16;
  }
  _mm256_storeu_ps(acc + 0, c00);
  _mm256_storeu_ps(acc + 8, c01);
  _mm256_storeu_ps(acc + 16, c10);
  _mm256_storeu_ps(acc + 24, c11);
  _mm256_storeu_ps(acc + 32, c20);
  _mm256_storeu_ps(acc + 40, c21);
  _mm256_storeu_ps(acc + 48, c30);
  _mm256_storeu_ps(acc + 56, c31);
  _mm256_storeu_ps(acc + 64, c40);
  _mm256_storeu_ps(acc + 72, c41);
  _mm256_storeu_ps(acc + 80, c50);
  _mm256_storeu_ps(acc + 88, c51);
}

void axpy(std::size_t n, float a, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  // Multiply and add separately so results match the scalar reference bit for bit.
  for (; i + 8 <= n; i += 8) {
    const __m256 prod = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot(std::size_t n, const float* x, const float* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 vy = _mm256_loadu_ps(y + i);
    const __m256d xl = _mm256_cvtps_pd(_mm256_castps256_ps128(vx));
    const __m256d xh = _mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1));
    const __m256d yl = _mm256_cvtps_pd(_mm256_castps256_ps128(vy));
    const __m256d yh = _mm256_cvtps_pd(_mm256_extractf128_ps(vy, 1));
    acc0 = _mm256_fmadd_pd(xl, yl, acc0);
    acc1 = _mm256_fmadd_pd(xh, yh, acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return s;
}

double abs_sum(std::size_t n, const float* x) {
  const __m256 sign_mask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_and_ps(_mm256_loadu_ps(x + i), sign_mask);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = static_cast<double>(x[i]);
    s += d < 0.0 ? -d : d;
  }
  return s;
}

inline float clampf(float v, float lo, float hi) {
  v = v > lo ? v : lo;
  return v < hi ? v : hi;
}

void add_clamp(std::size_t n, const float* x, const float* p, float* out, float lo, float hi) {
  const __m256 vlo = _mm256_set1_ps(lo);
  const __m256 vhi = _mm256_set1_ps(hi);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 s = _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(p + i));
    _mm256_storeu_ps(out + i, _mm256_min_ps(_mm256_max_ps(s, vlo), vhi));
  }
  for (; i < n; ++i) out[i] = clampf(x[i] + p[i], lo, hi);
}

void relu_forward(std::size_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    _mm256_storeu_ps(y + i, _mm256_and_ps(v, _mm256_cmp_ps(v, zero, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* y, const float* dy, float* dx) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(_mm256_loadu_ps(dy + i), mask));
  }
  for (; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void scale_shift(std::size_t n, const float* x, float scale, float shift, float* y) {
  const __m256 vs = _mm256_set1_ps(scale);
  const __m256 vb = _mm256_set1_ps(shift);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_mul_ps(_mm256_loadu_ps(x + i), vs), vb));
  }
  for (; i < n; ++i) y[i] = x[i] * scale + shift;
}

void sign_step_clip(std::size_t n, const float* grad, float step, float bound, float* delta) {
  const __m256 zero = _mm256_setzero_ps();
  const __m256 pos = _mm256_set1_ps(step);
  const __m256 neg = _mm256_set1_ps(-step);
  const __m256 vlo = _mm256_set1_ps(-bound);
  const __m256 vhi = _mm256_set1_ps(bound);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 inc = _mm256_or_ps(_mm256_and_ps(_mm256_cmp_ps(g, zero, _CMP_GT_OQ), pos),
                                    _mm256_and_ps(_mm256_cmp_ps(g, zero, _CMP_LT_OQ), neg));
    const __m256 d = _mm256_add_ps(_mm256_loadu_ps(delta + i), inc);
    _mm256_storeu_ps(delta + i, _mm256_min_ps(_mm256_max_ps(d, vlo), vhi));
  }
  for (; i < n; ++i) {
    const float s = grad[i] > 0.0f ? 1.0f : (grad[i] < 0.0f ? -1.0f : 0.0f);
    delta[i] = clampf(delta[i] + step * s, -bound, bound);
  }
}

void adam_update(std::size_t n, float* param, const float* grad, float* m, float* v, float lr,
                 float beta1, float beta2, float eps, float bias_c1, float bias_c2) {
  const float one_b1 = 1.0f - beta1;
  const float one_b2 = 1.0f - beta2;
  const __m256 vb1 = _mm256_set1_ps(beta1), vob1 = _mm256_set1_ps(one_b1);
  const __m256 vb2 = _mm256_set1_ps(beta2), vob2 = _mm256_set1_ps(one_b2);
  const __m256 vbc1 = _mm256_set1_ps(bias_c1), vbc2 = _mm256_set1_ps(bias_c2);
  const __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(vob1, g));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(vob2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mhat = _mm256_div_ps(mi, vbc1);
    const __m256 vhat = _mm256_div_ps(vi, vbc2);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), _mm256_add_ps(_mm256_sqrt_ps(vhat), veps));
    _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), upd));
  }
  for (; i < n; ++i) {
    const float g = grad[i];
    m[i] = beta1 * m[i] + one_b1 * g;
    v[i] = beta2 * v[i] + one_b2 * (g * g);
    const float mhat = m[i] / bias_c1;
    const float vhat = v[i] / bias_c2;
    param[i] -= lr * mhat / (__builtin_sqrtf(vhat) + eps);
  }
}

const KernelTable kTable{
    "avx2",       gemm_micro,    axpy,        dot,            abs_sum,     add_clamp,
    relu_forward, relu_backward, scale_shift, sign_step_clip, adam_update,
};

}  // namespace

const KernelTable* avx2_table_unchecked() { return &kTable; }

#else

const KernelTable* avx2_table_unchecked() { return nullptr; }

#endif

}  // namespace vidup::kernels
