#include "im2col.hpp"

#include <algorithm>
#include <cstring>

namespace vidup::nn::detail {
namespace {

// Range of output positions o with 0 <= o * stride - pad + k < extent.
inline void valid_range(int out, int stride, int pad, int k, int extent, int& lo, int& hi) {
  lo = 0;
  while (lo < out && lo * stride - pad + k < 0) ++lo;
  hi = out;
  while (hi > lo && (hi - 1) * stride - pad + k >= extent) --hi;
}

}  // namespace

void im2col(const VolumeGeometry& g, const float* image, float* cols) {
  const int plane = g.out.h * g.out.w;
  const int ncols = g.col_cols();
  const std::ptrdiff_t img_hw = static_cast<std::ptrdiff_t>(g.image.h) * g.image.w;
  const std::ptrdiff_t img_vol = img_hw * g.image.t;
  for (int c = 0; c < g.channels; ++c) {
    const float* src_c = image + c * img_vol;
    for (int kt = 0; kt < g.kernel.t; ++kt) {
      for (int kh = 0; kh < g.kernel.h; ++kh) {
        for (int kw = 0; kw < g.kernel.w; ++kw) {
          const int row = ((c * g.kernel.t + kt) * g.kernel.h + kh) * g.kernel.w + kw;
          float* dst_row = cols + static_cast<std::ptrdiff_t>(row) * ncols;
          int w_lo, w_hi;
          valid_range(g.out.w, g.stride.w, g.pad.w, kw, g.image.w, w_lo, w_hi);
          for (int ot = 0; ot < g.out.t; ++ot) {
            const int it = ot * g.stride.t - g.pad.t + kt;
            float* dst_t = dst_row + ot * plane;
            if (it < 0 || it >= g.image.t) {
              std::memset(dst_t, 0, sizeof(float) * plane);
              continue;
            }
            for (int oh = 0; oh < g.out.h; ++oh) {
              const int ih = oh * g.stride.h - g.pad.h + kh;
              float* dst = dst_t + oh * g.out.w;
              if (ih < 0 || ih >= g.image.h) {
                std::memset(dst, 0, sizeof(float) * g.out.w);
                continue;
              }
              const float* src = src_c + it * img_hw + static_cast<std::ptrdiff_t>(ih) * g.image.w;
              for (int ow = 0; ow < w_lo; ++ow) dst[ow] = 0.0f;
              if (g.stride.w == 1) {
                const int off = -g.pad.w + kw;
                if (w_hi > w_lo) std::memcpy(dst + w_lo, src + w_lo + off, sizeof(float) * (w_hi - w_lo));
              } else {
                for (int ow = w_lo; ow < w_hi; ++ow) dst[ow] = src[ow * g.stride.w - g.pad.w + kw];
              }
              for (int ow = w_hi; ow < g.out.w; ++ow) dst[ow] = 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const VolumeGeometry& g, const float* cols, float* image) {
  const int plane = g.out.h * g.out.w;
  const int ncols = g.col_cols();
  const std::ptrdiff_t img_hw = static_cast<std::ptrdiff_t>(g.image.h) * g.image.w;
  const std::ptrdiff_t img_vol = img_hw * g.image.t;
  for (int c = 0; c < g.channels; ++c) {
    float* dst_c = image + c * img_vol;
    for (int kt = 0; kt < g.kernel.t; ++kt) {
      for (int kh = 0; kh < g.kernel.h; ++kh) {
        for (int kw = 0; kw < g.kernel.w; ++kw) {
          const int row = ((c * g.kernel.t + kt) * g.kernel.h + kh) * g.kernel.w + kw;
          const float* src_row = cols + static_cast<std::ptrdiff_t>(row) * ncols;
          int w_lo, w_hi;
          valid_range(g.out.w, g.stride.w, g.pad.w, kw, g.image.w, w_lo, w_hi);
          for (int ot = 0; ot < g.out.t; ++ot) {
            const int it = ot * g.stride.t - g.pad.t + kt;
            if (it < 0 || it >= g.image.t) continue;
            for (int oh = 0; oh < g.out.h; ++oh) {
              const int ih = oh * g.stride.h - g.pad.h + kh;
              if (ih < 0 || ih >= g.image.h) continue;
              const float* src = src_row + ot * plane + oh * g.out.w;
              float* dst = dst_c + it * img_hw + static_cast<std::ptrdiff_t>(ih) * g.image.w;
              if (g.stride.w == 1) {
                const int off = -g.pad.w + kw;
                for (int ow = w_lo; ow < w_hi; ++ow) dst[ow + off] += src[ow];
              } else {
                for (int ow = w_lo; ow < w_hi; ++ow) dst[ow * g.stride.w - g.pad.w + kw] += src[ow];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace vidup::nn::detail
