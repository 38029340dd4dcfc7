#include "vidup/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace vidup::kernels {
namespace {

void gemm_micro(int kc, const float* a_panel, const float* b_panel, float* acc) {
  std::fill(acc, acc + kGemmMR * kGemmNR, 0.0f);
  for (int k = 0; k < kc; ++k) {
    const float* a = a_panel + k * kGemmMR;
    const float* b = b_panel + k * kGemmNR;
    for (int i = 0; i < kGemmMR; ++i) {
      float* row = acc + i * kGemmNR;
      for (int j = 0; j < kGemmNR; ++j) row[j] += a[i] * b[j];
    }
  }
}

void axpy(std::size_t n, float a, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot(std::size_t n, const float* x, const float* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return s;
}

double abs_sum(std::size_t n, const float* x) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::fabs(static_cast<double>(x[i]));
  return s;
}

void add_clamp(std::size_t n, const float* x, const float* p, float* out, float lo, float hi) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::min(std::max(x[i] + p[i], lo), hi);
}

void relu_forward(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* y, const float* dy, float* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void scale_shift(std::size_t n, const float* x, float scale, float shift, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * scale + shift;
}

void sign_step_clip(std::size_t n, const float* grad, float step, float bound, float* delta) {
  for (std::size_t i = 0; i < n; ++i) {
    const float s = grad[i] > 0.0f ? 1.0f : (grad[i] < 0.0f ? -1.0f : 0.0f);
    delta[i] = std::min(std::max(delta[i] + step * s, -bound), bound);
  }
}

void adam_update(std::size_t n, float* param, const float* grad, float* m, float* v, float lr,
                 float beta1, float beta2, float eps, float bias_c1, float bias_c2) {
  const float one_b1 = 1.0f - beta1;
  const float one_b2 = 1.0f - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grad[i];
    m[i] = beta1 * m[i] + one_b1 * g;
    v[i] = beta2 * v[i] + one_b2 * (g * g);
    const float mhat = m[i] / bias_c1;
    const float vhat = v[i] / bias_c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",     gemm_micro,  axpy,           dot,        abs_sum,     add_clamp,
      relu_forward, relu_backward, scale_shift, sign_step_clip, adam_update,
  };
  return table;
}

}  // namespace vidup::kernels
