// Blocked single-precision GEMM. Operands are packed into MR/NR panels here;
// only the register tile is computed by the dispatched micro-kernel.
#include <algorithm>
#include <vector>

#include "vidup/kernels/kernels.hpp"

namespace vidup::kernels {
namespace {

constexpr int kBlockK = 256;
constexpr int kBlockM = 72;
constexpr int kBlockN = 1024;

static_assert(kBlockM % kGemmMR == 0 && kBlockN % kGemmNR == 0);

void pack_a(Trans trans, const float* a, int lda, int i0, int mc, int k0, int kc, float* out) {
  for (int ip = 0; ip < mc; ip += kGemmMR) {
    const int rows = std::min(kGemmMR, mc - ip);
    for (int k = 0; k < kc; ++k) {
      for (int r = 0; r < kGemmMR; ++r) {
        float v = 0.0f;
        if (r < rows) {
          const int i = i0 + ip + r;
          const int kk = k0 + k;
          v = trans == Trans::No ? a[static_cast<std::ptrdiff_t>(i) * lda + kk]
                                 : a[static_cast<std::ptrdiff_t>(kk) * lda + i];
        }
        *out++ = v;
      }
    }
  }
}

void pack_b(Trans trans, const float* b, int ldb, int k0, int kc, int j0, int nc, float* out) {
  for (int jp = 0; jp < nc; jp += kGemmNR) {
    const int cols = std::min(kGemmNR, nc - jp);
    for (int k = 0; k < kc; ++k) {
      const int kk = k0 + k;
      if (trans == Trans::No) {
        const float* src = b + static_cast<std::ptrdiff_t>(kk) * ldb + j0 + jp;
        int c = 0;
        for (; c < cols; ++c) out[c] = src[c];
        for (; c < kGemmNR; ++c) out[c] = 0.0f;
      } else {
        for (int c = 0; c < kGemmNR; ++c) {
          out[c] = c < cols ? b[static_cast<std::ptrdiff_t>(j0 + jp + c) * ldb + kk] : 0.0f;
        }
      }
      out += kGemmNR;
    }
  }
}

}  // namespace

void sgemm(const KernelTable& table, Trans trans_a, Trans trans_b, int m, int n, int k, float alpha,
           const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    for (int i = 0; i < m; ++i) {
      float* row = c + static_cast<std::ptrdiff_t>(i) * ldc;
      for (int j = 0; j < n; ++j) row[j] = beta == 0.0f ? 0.0f : beta * row[j];
    }
    return;
  }
  thread_local std::vector<float> a_pack;
  thread_local std::vector<float> b_pack;
  a_pack.resize(static_cast<std::size_t>(kBlockM) * kBlockK);
  b_pack.resize(static_cast<std::size_t>(kBlockN) * kBlockK);
  float acc[kGemmMR * kGemmNR];

  for (int j0 = 0; j0 < n; j0 += kBlockN) {
    const int nc = std::min(kBlockN, n - j0);
    for (int k0 = 0; k0 < k; k0 += kBlockK) {
      const int kc = std::min(kBlockK, k - k0);
      const bool first = k0 == 0;
      pack_b(trans_b, b, ldb, k0, kc, j0, nc, b_pack.data());
      for (int i0 = 0; i0 < m; i0 += kBlockM) {
        const int mc = std::min(kBlockM, m - i0);
        pack_a(trans_a, a, lda, i0, mc, k0, kc, a_pack.data());
        for (int jp = 0; jp < nc; jp += kGemmNR) {
          const int cols = std::min(kGemmNR, nc - jp);
          const float* bp = b_pack.data() + static_cast<std::ptrdiff_t>(jp) * kc;
          for (int ip = 0; ip < mc; ip += kGemmMR) {
            const int rows = std::min(kGemmMR, mc - ip);
            table.gemm_micro(kc, a_pack.data() + static_cast<std::ptrdiff_t>(ip) * kc, bp, acc);
            for (int r = 0; r < rows; ++r) {
              float* crow = c + static_cast<std::ptrdiff_t>(i0 + ip + r) * ldc + j0 + jp;
              const float* arow = acc + r * kGemmNR;
              if (!first) {
                for (int q = 0; q < cols; ++q) crow[q] += alpha * arow[q];
              } else if (beta == 0.0f) {
                for (int q = 0; q < cols; ++q) crow[q] = alpha * arow[q];
              } else {
                for (int q = 0; q < cols; ++q) crow[q] = beta * crow[q] + alpha * arow[q];
              }
            }
          }
        }
      }
    }
  }
}

void sgemm(Trans trans_a, Trans trans_b, int m, int n, int k, float alpha, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc) {
  sgemm(active(), trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace vidup::kernels
