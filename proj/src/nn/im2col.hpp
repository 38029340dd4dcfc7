#pragma once

#include "vidup/nn/layers.hpp"

namespace vidup::nn::detail {

// Geometry of a strided, padded 3D convolution between an image volume and
// its column matrix. cols is [channels * kt * kh * kw, out.t * out.h * out.w].
struct VolumeGeometry {
  int channels;
  Dims3 image, kernel, stride, pad, out;

  int kernel_volume() const { return kernel.t * kernel.h * kernel.w; }
  int col_rows() const { return channels * kernel_volume(); }
  int col_cols() const { return out.t * out.h * out.w; }
  int image_size() const { return channels * image.t * image.h * image.w; }
};

void im2col(const VolumeGeometry& g, const float* image, float* cols);
// Accumulates into image; the caller zeroes it.
void col2im(const VolumeGeometry& g, const float* cols, float* image);

}  // namespace vidup::nn::detail
