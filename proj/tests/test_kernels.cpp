// Scalar reference vs AVX2 equivalence for every dispatched kernel, plus the
// blocked GEMM against a naive triple loop.
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "vidup/kernels/kernels.hpp"

using namespace vidup::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

void naive_gemm(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b,
                int ldb, float beta, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) {
        const float av = ta == Trans::No ? a[i * lda + p] : a[p * lda + i];
        const float bv = tb == Trans::No ? b[p * ldb + j] : b[j * ldb + p];
        s += static_cast<double>(av) * bv;
      }
      const float prev = beta == 0.0f ? 0.0f : beta * c[i * ldc + j];
      c[i * ldc + j] = static_cast<float>(alpha * s + prev);
    }
  }
}

std::vector<const KernelTable*> tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (avx2_table()) out.push_back(avx2_table());
  return out;
}

}  // namespace

TEST_CASE("dispatch selects a usable table") {
  CHECK(!active().name.empty());
  if (cpu_has_avx2_fma()) CHECK(avx2_table() != nullptr);
  MESSAGE("active kernels: " << active().name);
}

TEST_CASE("sgemm matches naive product for every transpose combination") {
  const int shapes[][3] = {{1, 1, 1}, {5, 7, 3}, {6, 16, 8}, {13, 35, 300}, {72, 1030, 27}, {8, 4096, 81}};
  for (const KernelTable* t : tables()) {
    for (auto ta : {Trans::No, Trans::Yes}) {
      for (auto tb : {Trans::No, Trans::Yes}) {
        for (const auto& s : shapes) {
          const int m = s[0], n = s[1], k = s[2];
          const int lda = ta == Trans::No ? k : m;
          const int ldb = tb == Trans::No ? n : k;
          const auto a = random_vec(static_cast<std::size_t>(m) * k, 1);
          const auto b = random_vec(static_cast<std::size_t>(k) * n, 2);
          for (float beta : {0.0f, 1.0f, 0.5f}) {
            auto c = random_vec(static_cast<std::size_t>(m) * n, 3);
            auto expect = c;
            naive_gemm(ta, tb, m, n, k, 0.75f, a.data(), lda, b.data(), ldb, beta, expect.data(), n);
            sgemm(*t, ta, tb, m, n, k, 0.75f, a.data(), lda, b.data(), ldb, beta, c.data(), n);
            double worst = 0.0;
            for (std::size_t i = 0; i < c.size(); ++i) {
              worst = std::max(worst, std::fabs(static_cast<double>(c[i]) - expect[i]) / (1.0 + std::fabs(expect[i])));
            }
            INFO(t->name << " m=" << m << " n=" << n << " k=" << k << " beta=" << beta);
            CHECK(worst < 1e-4 * std::sqrt(static_cast<double>(k)));
          }
        }
      }
    }
  }
}

TEST_CASE("sgemm with beta zero ignores NaN in the output buffer") {
  std::vector<float> a(4, 1.0f), b(4, 1.0f), c(4, NAN);
  sgemm(Trans::No, Trans::No, 2, 2, 2, 1.0f, a.data(), 2, b.data(), 2, 0.0f, c.data(), 2);
  for (float v : c) CHECK(v == 2.0f);
}

TEST_CASE("avx2 elementwise kernels match the scalar reference exactly") {
  const KernelTable* simd = avx2_table();
  if (!simd) {
    MESSAGE("AVX2 unavailable; skipping equivalence");
    return;
  }
  const KernelTable& ref = scalar_table();
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 31u, 1000u, 4099u}) {
    INFO("n=" << n);
    const auto x = random_vec(n, 11, -300.0f, 300.0f);
    const auto p = random_vec(n, 12, -20.0f, 20.0f);
    auto g = random_vec(n, 13);
    if (n > 3) g[3] = 0.0f;

    auto y1 = random_vec(n, 14), y2 = y1;
    ref.axpy(n, 0.3f, x.data(), y1.data());
    simd->axpy(n, 0.3f, x.data(), y2.data());
    CHECK(y1 == y2);

    std::vector<float> o1(n), o2(n);
    ref.add_clamp(n, x.data(), p.data(), o1.data(), 0.0f, 255.0f);
    simd->add_clamp(n, x.data(), p.data(), o2.data(), 0.0f, 255.0f);
    CHECK(o1 == o2);

    ref.relu_forward(n, x.data(), o1.data());
    simd->relu_forward(n, x.data(), o2.data());
    CHECK(o1 == o2);

    ref.relu_backward(n, x.data(), p.data(), o1.data());
    simd->relu_backward(n, x.data(), p.data(), o2.data());
    CHECK(o1 == o2);

    ref.scale_shift(n, x.data(), 1.0f / 127.5f, -1.0f, o1.data());
    simd->scale_shift(n, x.data(), 1.0f / 127.5f, -1.0f, o2.data());
    CHECK(o1 == o2);

    auto d1 = random_vec(n, 15, -10.0f, 10.0f), d2 = d1;
    ref.sign_step_clip(n, g.data(), 1.0f, 10.0f, d1.data());
    simd->sign_step_clip(n, g.data(), 1.0f, 10.0f, d2.data());
    CHECK(d1 == d2);

    auto w1 = random_vec(n, 16), w2 = w1;
    auto m1 = random_vec(n, 17, -0.1f, 0.1f), m2 = m1;
    auto v1 = random_vec(n, 18, 0.0f, 0.1f), v2 = v1;
    ref.adam_update(n, w1.data(), g.data(), m1.data(), v1.data(), 0.002f, 0.9f, 0.999f, 1e-8f, 0.19f, 0.003f);
    simd->adam_update(n, w2.data(), g.data(), m2.data(), v2.data(), 0.002f, 0.9f, 0.999f, 1e-8f, 0.19f, 0.003f);
    CHECK(w1 == w2);
    CHECK(m1 == m2);
    CHECK(v1 == v2);

    const double dref = ref.dot(n, x.data(), p.data());
    CHECK(simd->dot(n, x.data(), p.data()) == doctest::Approx(dref).epsilon(1e-12));
    const double aref = ref.abs_sum(n, x.data());
    CHECK(simd->abs_sum(n, x.data()) == doctest::Approx(aref).epsilon(1e-12));
  }
}

TEST_CASE("micro-kernels agree on a full tile") {
  const KernelTable* simd = avx2_table();
  if (!simd) return;
  const int kc = 37;
  const auto a = random_vec(static_cast<std::size_t>(kc) * kGemmMR, 21);
  const auto b = random_vec(static_cast<std::size_t>(kc) * kGemmNR, 22);
  float acc_ref[kGemmMR * kGemmNR], acc_simd[kGemmMR * kGemmNR];
  scalar_table().gemm_micro(kc, a.data(), b.data(), acc_ref);
  simd->gemm_micro(kc, a.data(), b.data(), acc_simd);
  for (int i = 0; i < kGemmMR * kGemmNR; ++i) CHECK(acc_simd[i] == doctest::Approx(acc_ref[i]).epsilon(1e-5));
}
