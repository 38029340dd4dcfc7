#include "vidup/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "im2col.hpp"
#include "vidup/errors.hpp"
#include "vidup/kernels/kernels.hpp"

namespace vidup::nn {

using kernels::Trans;
using kernels::sgemm;

namespace {

constexpr float kPixelScale = 1.0f / 127.5f;

Dims3 volume_dims(const Tensor& x) { return {x.dim(2), x.dim(3), x.dim(4)}; }
int volume(Dims3 d) { return d.t * d.h * d.w; }

void require_rank5(const Tensor& x, int channels, std::string_view who) {
  if (x.rank() != 5 || x.dim(1) != channels) {
    throw ShapeError(std::string(who) + ": expected [N, " + std::to_string(channels) + ", T, H, W], got " +
                     shape_str(x.shape()));
  }
}

void fill_uniform(Tensor& t, float bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (float& v : t.values()) v = dist(rng);
}

void fill_normal(Tensor& t, float stddev, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, stddev);
  for (float& v : t.values()) v = dist(rng);
}

std::vector<float>& scratch(int slot, std::size_t n) {
  thread_local std::vector<float> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b;
}

void add_channel_bias(float* y, const Tensor& bias, int channels, int plane) {
  for (int c = 0; c < channels; ++c) {
    const float b = bias[static_cast<std::size_t>(c)];
    float* row = y + static_cast<std::ptrdiff_t>(c) * plane;
    for (int i = 0; i < plane; ++i) row[i] += b;
  }
}

void accumulate_channel_sums(const float* dy, Tensor& db, int channels, int plane) {
  for (int c = 0; c < channels; ++c) {
    const float* row = dy + static_cast<std::ptrdiff_t>(c) * plane;
    double s = 0.0;
    for (int i = 0; i < plane; ++i) s += row[i];
    db[static_cast<std::size_t>(c)] += static_cast<float>(s);
  }
}

}  // namespace

// --- PixelRescale ----------------------------------------------------------

Tensor PixelRescale::forward(const Tensor& x, Mode, LayerCache* cache) const {
  Tensor y(x.shape());
  const auto& k = kernels::active();
  if (clamp_) {
    Tensor clamped(x.shape());
    std::vector<float> zeros(x.size(), 0.0f);
    k.add_clamp(x.size(), x.data(), zeros.data(), clamped.data(), 0.0f, 255.0f);
    k.scale_shift(x.size(), clamped.data(), kPixelScale, -1.0f, y.data());
  } else {
    k.scale_shift(x.size(), x.data(), kPixelScale, -1.0f, y.data());
  }
  if (cache) cache->input = x;
  return y;
}

Tensor PixelRescale::backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor>, bool want_dx) const {
  if (!want_dx) return {};
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const float v = cache.input[i];
    const bool pass = !clamp_ || (v >= 0.0f && v <= 255.0f);
    dx[i] = pass ? dy[i] * kPixelScale : 0.0f;
  }
  return dx;
}

// --- Conv3d ------------------------------------------------------------------

Conv3d::Conv3d(std::string name, int in_channels, int out_channels, Dims3 kernel, Dims3 stride, Dims3 pad,
               std::mt19937_64& rng)
    : in_c_(in_channels), out_c_(out_channels), kernel_(kernel), stride_(stride), pad_(pad) {
  const int k = volume(kernel);
  weight_ = {name + ".weight", Tensor({out_c_, in_c_ * k})};
  bias_ = {name + ".bias", Tensor({out_c_})};
  fill_uniform(weight_.value, std::sqrt(6.0f / static_cast<float>(in_c_ * k)), rng);
}

Dims3 Conv3d::output_dims(Dims3 in) const {
  return {(in.t + 2 * pad_.t - kernel_.t) / stride_.t + 1, (in.h + 2 * pad_.h - kernel_.h) / stride_.h + 1,
          (in.w + 2 * pad_.w - kernel_.w) / stride_.w + 1};
}

Tensor Conv3d::forward(const Tensor& x, Mode, LayerCache* cache) const {
  require_rank5(x, in_c_, "conv3d");
  const int n = x.dim(0);
  const Dims3 in = volume_dims(x);
  const Dims3 out = output_dims(in);
  const detail::VolumeGeometry g{in_c_, in, kernel_, stride_, pad_, out};
  const int rows = g.col_rows();
  const int cols = g.col_cols();
  auto& buf = scratch(0, static_cast<std::size_t>(rows) * cols);
  Tensor y({n, out_c_, out.t, out.h, out.w});
  for (int b = 0; b < n; ++b) {
    detail::im2col(g, x.slice(b).data(), buf.data());
    float* yb = y.slice(b).data();
    sgemm(Trans::No, Trans::No, out_c_, cols, rows, 1.0f, weight_.value.data(), rows, buf.data(), cols, 0.0f, yb,
          cols);
    add_channel_bias(yb, bias_.value, out_c_, cols);
  }
  if (cache) cache->input = x;
  return y;
}

Tensor Conv3d::backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                        bool want_dx) const {
  const Tensor& x = cache.input;
  const int n = x.dim(0);
  const Dims3 in = volume_dims(x);
  const Dims3 out = output_dims(in);
  const detail::VolumeGeometry g{in_c_, in, kernel_, stride_, pad_, out};
  const int rows = g.col_rows();
  const int cols = g.col_cols();
  auto& buf = scratch(0, static_cast<std::size_t>(rows) * cols);
  Tensor dx;
  if (want_dx) dx = Tensor(x.shape());
  for (int b = 0; b < n; ++b) {
    const float* dyb = dy.slice(b).data();
    if (!param_grads.empty()) {
      detail::im2col(g, x.slice(b).data(), buf.data());
      sgemm(Trans::No, Trans::Yes, out_c_, rows, cols, 1.0f, dyb, cols, buf.data(), cols, 1.0f,
            param_grads[0].data(), rows);
      accumulate_channel_sums(dyb, param_grads[1], out_c_, cols);
    }
    if (want_dx) {
      sgemm(Trans::Yes, Trans::No, rows, cols, out_c_, 1.0f, weight_.value.data(), rows, dyb, cols, 0.0f,
            buf.data(), cols);
      detail::col2im(g, buf.data(), dx.slice(b).data());
    }
  }
  return dx;
}

// --- ConvTranspose3d -----------------------------------------------------------

ConvTranspose3d::ConvTranspose3d(std::string name, int in_channels, int out_channels, Dims3 kernel, Dims3 stride,
                                 Dims3 pad, Dims3 out_pad, std::mt19937_64& rng)
    : in_c_(in_channels), out_c_(out_channels), kernel_(kernel), stride_(stride), pad_(pad), out_pad_(out_pad) {
  weight_ = {name + ".weight", Tensor({in_c_, out_c_ * volume(kernel)})};
  bias_ = {name + ".bias", Tensor({out_c_})};
  fill_normal(weight_.value, 0.02f, rng);
}

Dims3 ConvTranspose3d::output_dims(Dims3 in) const {
  return {(in.t - 1) * stride_.t - 2 * pad_.t + kernel_.t + out_pad_.t,
          (in.h - 1) * stride_.h - 2 * pad_.h + kernel_.h + out_pad_.h,
          (in.w - 1) * stride_.w - 2 * pad_.w + kernel_.w + out_pad_.w};
}

Tensor ConvTranspose3d::forward(const Tensor& x, Mode, LayerCache* cache) const {
  require_rank5(x, in_c_, "conv_transpose3d");
  const int n = x.dim(0);
  const Dims3 in = volume_dims(x);
  const Dims3 out = output_dims(in);
  const detail::VolumeGeometry g{out_c_, out, kernel_, stride_, pad_, in};
  const int rows = g.col_rows();
  const int cols = g.col_cols();
  auto& buf = scratch(0, static_cast<std::size_t>(rows) * cols);
  Tensor y({n, out_c_, out.t, out.h, out.w});
  for (int b = 0; b < n; ++b) {
    sgemm(Trans::Yes, Trans::No, rows, cols, in_c_, 1.0f, weight_.value.data(), rows, x.slice(b).data(), cols,
          0.0f, buf.data(), cols);
    float* yb = y.slice(b).data();
    detail::col2im(g, buf.data(), yb);
    add_channel_bias(yb, bias_.value, out_c_, volume(out));
  }
  if (cache) cache->input = x;
  return y;
}

Tensor ConvTranspose3d::backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                                 bool want_dx) const {
  const Tensor& x = cache.input;
  const int n = x.dim(0);
  const Dims3 in = volume_dims(x);
  const Dims3 out = output_dims(in);
  const detail::VolumeGeometry g{out_c_, out, kernel_, stride_, pad_, in};
  const int rows = g.col_rows();
  const int cols = g.col_cols();
  auto& buf = scratch(0, static_cast<std::size_t>(rows) * cols);
  Tensor dx;
  if (want_dx) dx = Tensor(x.shape());
  for (int b = 0; b < n; ++b) {
    const float* dyb = dy.slice(b).data();
    detail::im2col(g, dyb, buf.data());
    if (!param_grads.empty()) {
      sgemm(Trans::No, Trans::Yes, in_c_, rows, cols, 1.0f, x.slice(b).data(), cols, buf.data(), cols, 1.0f,
            param_grads[0].data(), rows);
      accumulate_channel_sums(dyb, param_grads[1], out_c_, volume(out));
    }
    if (want_dx) {
      sgemm(Trans::No, Trans::No, in_c_, cols, rows, 1.0f, weight_.value.data(), rows, buf.data(), cols, 0.0f,
            dx.slice(b).data(), cols);
    }
  }
  return dx;
}

// --- MaxPool3d -------------------------------------------------------------------

Tensor MaxPool3d::forward(const Tensor& x, Mode, LayerCache* cache) const {
  if (x.rank() != 5) throw ShapeError("maxpool3d: expected rank-5 input, got " + shape_str(x.shape()));
  const Dims3 in = volume_dims(x);
  if (in.t % window_.t || in.h % window_.h || in.w % window_.w) {
    throw ShapeError("maxpool3d: input " + shape_str(x.shape()) + " not divisible by pooling window");
  }
  const int n = x.dim(0), c = x.dim(1);
  const Dims3 out{in.t / window_.t, in.h / window_.h, in.w / window_.w};
  Tensor y({n, c, out.t, out.h, out.w});
  std::vector<int> index;
  if (cache) index.resize(y.size());
  const std::ptrdiff_t in_hw = static_cast<std::ptrdiff_t>(in.h) * in.w;
  std::size_t o = 0;
  for (int nc = 0; nc < n * c; ++nc) {
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(nc) * volume(in);
    for (int ot = 0; ot < out.t; ++ot) {
      for (int oh = 0; oh < out.h; ++oh) {
        for (int ow = 0; ow < out.w; ++ow, ++o) {
          float best = -INFINITY;
          std::ptrdiff_t arg = base;
          for (int dt = 0; dt < window_.t; ++dt) {
            for (int dh = 0; dh < window_.h; ++dh) {
              const std::ptrdiff_t row =
                  base + (ot * window_.t + dt) * in_hw + static_cast<std::ptrdiff_t>(oh * window_.h + dh) * in.w;
              for (int dw = 0; dw < window_.w; ++dw) {
                const std::ptrdiff_t at = row + ow * window_.w + dw;
                if (x[static_cast<std::size_t>(at)] > best) {
                  best = x[static_cast<std::size_t>(at)];
                  arg = at;
                }
              }
            }
          }
          y[o] = best;
          if (cache) index[o] = static_cast<int>(arg);
        }
      }
    }
  }
  if (cache) {
    cache->input = Tensor(x.shape());  // only the shape is needed
    cache->index = std::move(index);
  }
  return y;
}

Tensor MaxPool3d::backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor>, bool want_dx) const {
  if (!want_dx) return {};
  Tensor dx(cache.input.shape());
  for (std::size_t o = 0; o < dy.size(); ++o) dx[static_cast<std::size_t>(cache.index[o])] += dy[o];
  return dx;
}

// --- BatchNorm3d -------------------------------------------------------------------

BatchNorm3d::BatchNorm3d(std::string name, int channels, float eps) : channels_(channels), eps_(eps) {
  gamma_ = {name + ".gamma", Tensor({channels}, 1.0f)};
  beta_ = {name + ".beta", Tensor({channels})};
  running_mean_ = {name + ".running_mean", Tensor({channels})};
  running_var_ = {name + ".running_var", Tensor({channels}, 1.0f)};
}

Tensor BatchNorm3d::forward(const Tensor& x, Mode mode, LayerCache* cache) const {
  require_rank5(x, channels_, "batchnorm3d");
  const int n = x.dim(0);
  const int plane = volume(volume_dims(x));
  const double count = static_cast<double>(n) * plane;
  Tensor y(x.shape());
  std::vector<float> mean(channels_), var(channels_), invstd(channels_);
  const bool training = mode == Mode::Training;
  for (int c = 0; c < channels_; ++c) {
    if (training) {
      double s = 0.0, s2 = 0.0;
      for (int b = 0; b < n; ++b) {
        const float* row = x.data() + (static_cast<std::ptrdiff_t>(b) * channels_ + c) * plane;
        for (int i = 0; i < plane; ++i) s += row[i];
      }
      const double mu = s / count;
      for (int b = 0; b < n; ++b) {
        const float* row = x.data() + (static_cast<std::ptrdiff_t>(b) * channels_ + c) * plane;
        for (int i = 0; i < plane; ++i) {
          const double d = row[i] - mu;
          s2 += d * d;
        }
      }
      mean[c] = static_cast<float>(mu);
      var[c] = static_cast<float>(s2 / count);
    } else {
      mean[c] = running_mean_.value[c];
      var[c] = running_var_.value[c];
    }
    invstd[c] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(var[c]) + eps_));
  }
  Tensor xhat;
  if (cache && training) xhat = Tensor(x.shape());
  const auto& k = kernels::active();
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < channels_; ++c) {
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(b) * channels_ + c) * plane;
      const float g = gamma_.value[c];
      const float scale = g * invstd[c];
      const float shift = beta_.value[c] - mean[c] * scale;
      k.scale_shift(static_cast<std::size_t>(plane), x.data() + off, scale, shift, y.data() + off);
      if (cache && training) {
        k.scale_shift(static_cast<std::size_t>(plane), x.data() + off, invstd[c], -mean[c] * invstd[c],
                      xhat.data() + off);
      }
    }
  }
  if (cache) {
    cache->training = training;
    cache->input = Tensor(x.shape());
    cache->output = std::move(xhat);
    cache->stats.clear();
    cache->stats.insert(cache->stats.end(), mean.begin(), mean.end());
    cache->stats.insert(cache->stats.end(), var.begin(), var.end());
    cache->stats.insert(cache->stats.end(), invstd.begin(), invstd.end());
    cache->index = {n * plane};
  }
  return y;
}

Tensor BatchNorm3d::backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                             bool want_dx) const {
  const int n = dy.dim(0);
  const int plane = volume(volume_dims(dy));
  const double count = static_cast<double>(n) * plane;
  const float* invstd = cache.stats.data() + 2 * channels_;
  Tensor dx;
  if (want_dx) dx = Tensor(dy.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(b) * channels_ + c) * plane;
      for (int i = 0; i < plane; ++i) {
        const float g = dy[static_cast<std::size_t>(off + i)];
        sum_dy += g;
        if (cache.training) sum_dy_xhat += static_cast<double>(g) * cache.output[static_cast<std::size_t>(off + i)];
      }
    }
    if (!param_grads.empty()) {
      if (!cache.training) throw ShapeError("batchnorm3d: parameter gradients need a training-mode pass");
      param_grads[0][c] += static_cast<float>(sum_dy_xhat);
      param_grads[1][c] += static_cast<float>(sum_dy);
    }
    if (!want_dx) continue;
    const float g = gamma_.value[c];
    for (int b = 0; b < n; ++b) {
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(b) * channels_ + c) * plane;
      for (int i = 0; i < plane; ++i) {
        const auto at = static_cast<std::size_t>(off + i);
        if (cache.training) {
          const double v = count * dy[at] - sum_dy - cache.output[at] * sum_dy_xhat;
          dx[at] = static_cast<float>(g * invstd[c] * v / count);
        } else {
          dx[at] = g * invstd[c] * dy[at];
        }
      }
    }
  }
  return dx;
}

void BatchNorm3d::commit_statistics(const LayerCache& cache, float factor) {
  if (!cache.training) return;
  const double count = cache.index.empty() ? 1.0 : cache.index[0];
  const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
  for (int c = 0; c < channels_; ++c) {
    const float mean = cache.stats[static_cast<std::size_t>(c)];
    const float var = static_cast<float>(cache.stats[static_cast<std::size_t>(channels_ + c)] * unbias);
    running_mean_.value[c] = (1.0f - factor) * running_mean_.value[c] + factor * mean;
    running_var_.value[c] = (1.0f - factor) * running_var_.value[c] + factor * var;
  }
}

// --- ReLU / ScaledTanh -----------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, Mode, LayerCache* cache) const {
  Tensor y(x.shape());
  kernels::active().relu_forward(x.size(), x.data(), y.data());
  if (cache) cache->output = y;
  return y;
}

Tensor ReLU::backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor>, bool want_dx) const {
  if (!want_dx) return {};
  Tensor dx(dy.shape());
  kernels::active().relu_backward(dy.size(), cache.output.data(), dy.data(), dx.data());
  return dx;
}

Tensor ScaledTanh::forward(const Tensor& x, Mode, LayerCache* cache) const {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = scale_ * std::tanh(x[i]);
  if (cache) cache->output = y;
  return y;
}

Tensor ScaledTanh::backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor>, bool want_dx) const {
  if (!want_dx) return {};
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const float t = cache.output[i] / scale_;
    dx[i] = dy[i] * scale_ * (1.0f - t * t);
  }
  return dx;
}

// --- Linear ------------------------------------------------------------------------------

Linear::Linear(std::string name, int in_features, int out_features, std::mt19937_64& rng)
    : in_f_(in_features), out_f_(out_features) {
  weight_ = {name + ".weight", Tensor({out_f_, in_f_})};
  bias_ = {name + ".bias", Tensor({out_f_})};
  fill_uniform(weight_.value, std::sqrt(6.0f / static_cast<float>(in_f_)), rng);
}

Tensor Linear::forward(const Tensor& x, Mode, LayerCache* cache) const {
  const int n = x.dim(0);
  if (x.size() != static_cast<std::size_t>(n) * in_f_) {
    throw ShapeError("linear: expected " + std::to_string(in_f_) + " features per sample, got " +
                     shape_str(x.shape()));
  }
  Tensor y({n, out_f_});
  sgemm(Trans::No, Trans::Yes, n, out_f_, in_f_, 1.0f, x.data(), in_f_, weight_.value.data(), in_f_, 0.0f,
        y.data(), out_f_);
  for (int b = 0; b < n; ++b) {
    for (int o = 0; o < out_f_; ++o) y[static_cast<std::size_t>(b) * out_f_ + o] += bias_.value[o];
  }
  if (cache) cache->input = x;
  return y;
}

Tensor Linear::backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                        bool want_dx) const {
  const Tensor& x = cache.input;
  const int n = x.dim(0);
  if (!param_grads.empty()) {
    sgemm(Trans::Yes, Trans::No, out_f_, in_f_, n, 1.0f, dy.data(), out_f_, x.data(), in_f_, 1.0f,
          param_grads[0].data(), in_f_);
    for (int b = 0; b < n; ++b) {
      for (int o = 0; o < out_f_; ++o) param_grads[1][o] += dy[static_cast<std::size_t>(b) * out_f_ + o];
    }
  }
  if (!want_dx) return {};
  Tensor dx(x.shape());
  sgemm(Trans::No, Trans::No, n, in_f_, out_f_, 1.0f, dy.data(), out_f_, weight_.value.data(), in_f_, 0.0f,
        dx.data(), in_f_);
  return dx;
}

// --- Broadcast3d -------------------------------------------------------------------------------

Tensor Broadcast3d::forward(const Tensor& x, Mode, LayerCache* cache) const {
  if (x.rank() != 2) throw ShapeError("broadcast3d: expected [N, F], got " + shape_str(x.shape()));
  const int n = x.dim(0), f = x.dim(1);
  const int vol = volume(dims_);
  Tensor y({n, f, dims_.t, dims_.h, dims_.w});
  for (int i = 0; i < n * f; ++i) {
    std::fill_n(y.data() + static_cast<std::ptrdiff_t>(i) * vol, vol, x[static_cast<std::size_t>(i)]);
  }
  if (cache) cache->input = Tensor(x.shape());
  return y;
}

Tensor Broadcast3d::backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor>, bool want_dx) const {
  if (!want_dx) return {};
  Tensor dx(cache.input.shape());
  const int vol = volume(dims_);
  for (std::size_t i = 0; i < dx.size(); ++i) {
    double s = 0.0;
    for (int j = 0; j < vol; ++j) s += dy[i * static_cast<std::size_t>(vol) + static_cast<std::size_t>(j)];
    dx[i] = static_cast<float>(s);
  }
  return dx;
}

// --- Sequential ----------------------------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x, Mode mode, Tape* tape) const {
  if (tape) tape->assign(layers_.size(), LayerCache{});
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) h = layers_[i]->forward(h, mode, tape ? &(*tape)[i] : nullptr);
  return h;
}

Tensor Sequential::backward(const Tensor& dy, const Tape& tape, std::vector<Tensor>* grads, bool want_dx) const {
  if (tape.size() != layers_.size()) throw ShapeError("sequential: tape does not match network");
  std::vector<std::size_t> offsets(layers_.size() + 1, 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offsets[i + 1] = offsets[i] + const_cast<Layer&>(*layers_[i]).params().size();
  }
  Tensor g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::span<Tensor> pg;
    if (grads) pg = std::span<Tensor>(grads->data() + offsets[i], offsets[i + 1] - offsets[i]);
    g = layers_[i]->backward(g, tape[i], pg, i > 0 || want_dx);
  }
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<const Param*> Sequential::params() const {
  std::vector<const Param*> out;
  for (Param* p : const_cast<Sequential*>(this)->params()) out.push_back(p);
  return out;
}

std::vector<Param*> Sequential::buffers() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->buffers()) out.push_back(p);
  }
  return out;
}

std::vector<const Param*> Sequential::buffers() const {
  std::vector<const Param*> out;
  for (Param* p : const_cast<Sequential*>(this)->buffers()) out.push_back(p);
  return out;
}

std::vector<Tensor> Sequential::zero_grads() const {
  std::vector<Tensor> out;
  for (const Param* p : params()) out.emplace_back(p->value.shape());
  return out;
}

void Sequential::commit_statistics(const Tape& tape, float factor) {
  for (std::size_t i = 0; i < layers_.size() && i < tape.size(); ++i) layers_[i]->commit_statistics(tape[i], factor);
}

// --- Adam ---------------------------------------------------------------------------------------------

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const Param* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step(std::span<const Tensor> grads, float lr) {
  if (grads.size() != params_.size()) throw ShapeError("adam: gradient count does not match parameters");
  ++t_;
  const auto bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_)));
  const auto bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_)));
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& value = params_[i]->value;
    if (grads[i].size() != value.size()) throw ShapeError("adam: gradient shape mismatch for " + params_[i]->name);
    k.adam_update(value.size(), value.data(), grads[i].data(), m_[i].data(), v_[i].data(), lr, cfg_.beta1,
                  cfg_.beta2, cfg_.eps, bc1, bc2);
  }
}

// --- helpers ----------------------------------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (int b = 0; b < n; ++b) {
    const float* z = logits.data() + static_cast<std::ptrdiff_t>(b) * k;
    float* q = out.data() + static_cast<std::ptrdiff_t>(b) * k;
    const float mx = *std::max_element(z, z + k);
    double sum = 0.0;
    std::vector<double> e(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      e[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(z[j]) - mx);
      sum += e[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < k; ++j) q[j] = static_cast<float>(e[static_cast<std::size_t>(j)] / sum);
  }
  return out;
}

std::uint64_t parameter_hash(std::span<const Param* const> params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Param* p : params) {
    mix(p->name.data(), p->name.size());
    for (int d : p->value.shape()) mix(&d, sizeof d);
    mix(p->value.data(), p->value.size() * sizeof(float));
  }
  return h;
}

}  // namespace vidup::nn
