#pragma once
// Minimal layer library for volumetric networks.
//
// Layers are immutable during a forward pass: everything backward() needs is
// written to a caller-owned LayerCache, so a built network can serve
// concurrent inference. Volumetric tensors are [N, C, T, H, W]; dense tensors
// are [N, F].

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vidup/tensor.hpp"

namespace vidup::nn {

enum class Mode { Inference, Training };

struct Param {
  std::string name;
  Tensor value;
};

struct LayerCache {
  bool training = false;
  Tensor input;
  Tensor output;
  std::vector<int> index;
  std::vector<float> stats;
};

struct Dims3 {
  int t = 1, h = 1, w = 1;
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const = 0;
  // Returns dL/dx (empty when want_dx is false). When param_grads is non-empty it
  // holds one tensor per params() entry and gradients are accumulated into it.
  virtual Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                          bool want_dx) const = 0;

  // Trainable parameters.
  virtual std::vector<Param*> params() { return {}; }
  // Non-trainable state persisted with the network (running statistics).
  virtual std::vector<Param*> buffers() { return {}; }
  // Blend batch statistics recorded in a training-mode cache into the buffers:
  // buffer = (1 - factor) * buffer + factor * batch.
  virtual void commit_statistics(const LayerCache& /*cache*/, float /*factor*/) {}
};

// Affine map of raw pixels [0, 255] to [-1, 1], optionally clamping first.
// The gradient is passed only where the clamp is inactive.
class PixelRescale final : public Layer {
 public:
  explicit PixelRescale(bool clamp) : clamp_(clamp) {}
  std::string_view kind() const override { return "pixel_rescale"; }
  Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                  bool want_dx) const override;
  bool clamps() const { return clamp_; }

 private:
  bool clamp_;
};

class Conv3d final : public Layer {
 public:
  Conv3d(std::string name, int in_channels, int out_channels, Dims3 kernel, Dims3 stride, Dims3 pad,
         std::mt19937_64& rng);
  std::string_view kind() const override { return "conv3d"; }
  Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                  bool want_dx) const override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  Dims3 output_dims(Dims3 in) const;

 private:
  int in_c_, out_c_;
  Dims3 kernel_, stride_, pad_;
  Param weight_;  // [out, in * kt * kh * kw]
  Param bias_;    // [out]
};

// Transposed 3D convolution; output extent is (in - 1) * stride - 2 * pad + kernel + out_pad.
class ConvTranspose3d final : public Layer {
 public:
  ConvTranspose3d(std::string name, int in_channels, int out_channels, Dims3 kernel, Dims3 stride,
                  Dims3 pad, Dims3 out_pad, std::mt19937_64& rng);
  std::string_view kind() const override { return "conv_transpose3d"; }
  Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                  bool want_dx) const override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  Dims3 output_dims(Dims3 in) const;

 private:
  int in_c_, out_c_;
  Dims3 kernel_, stride_, pad_, out_pad_;
  Param weight_;  // [in, out * kt * kh * kw]
  Param bias_;    // [out]
};

// Non-overlapping max pooling (stride equals window).
class MaxPool3d final : public Layer {
 public:
  explicit MaxPool3d(Dims3 window) : window_(window) {}
  std::string_view kind() const override { return "maxpool3d"; }
  Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                  bool want_dx) const override;
  Dims3 window() const { return window_; }

 private:
  Dims3 window_;
};

// Per-channel normalization over N, T, H, W. Training mode uses batch
// statistics; inference mode uses the running buffers.
class BatchNorm3d final : public Layer {
 public:
  BatchNorm3d(std::string name, int channels, float eps = 1e-5f);
  std::string_view kind() const override { return "batchnorm3d"; }
  Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                  bool want_dx) const override;
  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::vector<Param*> buffers() override { return {&running_mean_, &running_var_}; }
  void commit_statistics(const LayerCache& cache, float factor) override;

 private:
  int channels_;
  float eps_;
  Param gamma_, beta_, running_mean_, running_var_;
};

class ReLU final : public Layer {
 public:
  std::string_view kind() const override { return "relu"; }
  Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                  bool want_dx) const override;
};

// y = scale * tanh(x)
class ScaledTanh final : public Layer {
 public:
  explicit ScaledTanh(float scale) : scale_(scale) {}
  std::string_view kind() const override { return "scaled_tanh"; }
  Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                  bool want_dx) const override;
  float scale() const { return scale_; }

 private:
  float scale_;
};

// Fully connected layer over the flattened trailing dimensions.
class Linear final : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features, std::mt19937_64& rng);
  std::string_view kind() const override { return "linear"; }
  Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                  bool want_dx) const override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

 private:
  int in_f_, out_f_;
  Param weight_;  // [out, in]
  Param bias_;    // [out]
};

// [N, F] -> [N, F, t, h, w] by copying each feature vector to every position.
class Broadcast3d final : public Layer {
 public:
  explicit Broadcast3d(Dims3 dims) : dims_(dims) {}
  std::string_view kind() const override { return "broadcast3d"; }
  Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<Tensor> param_grads,
                  bool want_dx) const override;

 private:
  Dims3 dims_;
};

using Tape = std::vector<LayerCache>;

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  // tape is filled when non-null and is required for backward().
  Tensor forward(const Tensor& x, Mode mode, Tape* tape) const;
  // Gradients for params() are accumulated into grads when non-null.
  Tensor backward(const Tensor& dy, const Tape& tape, std::vector<Tensor>* grads, bool want_dx) const;

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::vector<Param*> buffers();
  std::vector<const Param*> buffers() const;
  // Zero tensors shaped like params().
  std::vector<Tensor> zero_grads() const;
  void commit_statistics(const Tape& tape, float factor);

  std::size_t size() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg = {});
  void step(std::span<const Tensor> grads, float lr);
  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

// Numerically stable softmax over the last axis of [N, K].
Tensor softmax(const Tensor& logits);

// FNV-1a over names, shapes, and raw values of the given parameters.
std::uint64_t parameter_hash(std::span<const Param* const> params);

}  // namespace vidup::nn
