#pragma once
// Perturbation generators (latent noise -> bounded perturbation) and the
// roll/tile post-processors that make perturbations cyclic-shift aware.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vidup/io.hpp"
#include "vidup/nn/layers.hpp"

namespace vidup {

struct NoiseVector {
  std::vector<float> z;
  int dim() const { return static_cast<int>(z.size()); }
};

// w frames of additive perturbation, [w, H, W, C]; every entry in [-xi, xi].
struct PerturbationClip {
  Tensor values;
  int frames() const { return values.dim(0); }
};

// One perturbation frame [H, W, C].
struct PerturbationFrame {
  Tensor values;
};

enum class GeneratorMode { Clip3d, Frame2d };
std::string_view mode_name(GeneratorMode m);
GeneratorMode parse_generator_mode(std::string_view s);

struct GeneratorConfig {
  GeneratorMode mode = GeneratorMode::Clip3d;
  int window = 16;
  int height = 32;
  int width = 32;
  int channels = 3;
  int noise_dim = 100;
  float xi = 10.0f;
  // Filters of the four hidden transposed-convolution layers.
  std::vector<int> filters{32, 32, 16, 16};
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  int output_frames() const { return mode == GeneratorMode::Clip3d ? window : 1; }
};

io::Json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const io::Json& j);

class GeneratorNet {
 public:
  explicit GeneratorNet(GeneratorConfig cfg);

  const GeneratorConfig& config() const { return cfg_; }
  GeneratorMode mode() const { return cfg_.mode; }
  float xi() const { return cfg_.xi; }
  nn::Sequential& body() { return body_; }
  const nn::Sequential& body() const { return body_; }

  // z batch [N, d] -> perturbations [N, frames, H, W, C].
  Tensor forward(const Tensor& z, nn::Mode mode, nn::Tape* tape) const;
  // Accumulates parameter gradients from dL/dperturbation ([N, frames, H, W, C]).
  void backward(const Tensor& dp, const nn::Tape& tape, std::vector<Tensor>& grads) const;

  // Re-estimates normalization statistics as the average over batches of fresh noise.
  void recalibrate(int batches, int batch_size, std::uint64_t seed);

 private:
  GeneratorConfig cfg_;
  nn::Sequential body_;
};

GeneratorNet build_generator(const GeneratorConfig& cfg);

// Entries drawn i.i.d. from U[-1, 1].
NoiseVector sample_noise(int dim, std::uint64_t seed);
// [n, dim] batch drawn from rng.
Tensor sample_noise_batch(int n, int dim, std::mt19937_64& rng);

// Inference-mode generation. Clip3d yields [w, H, W, C]; Frame2d yields [1, H, W, C].
Tensor generate(const GeneratorNet& gen, const NoiseVector& z);
PerturbationClip generate_clip(const GeneratorNet& gen, const NoiseVector& z);
PerturbationFrame generate_frame(const GeneratorNet& gen, const NoiseVector& z);

// Left rotation: frame i of the result is frame (i + offset) mod w of p.
PerturbationClip roll(const PerturbationClip& p, int offset);
Tensor roll_frames(const Tensor& frames, int offset);
// w copies of f along time.
PerturbationClip tile(const PerturbationFrame& f, int w);

// A generator's output as a clip: rolled clip3d output or tiled frame2d output.
PerturbationClip as_clip(const GeneratorNet& gen, const Tensor& output, int window);

void save_generator(const std::filesystem::path& dir, const GeneratorNet& gen, const io::Json& extra);
GeneratorNet load_generator(const std::filesystem::path& dir);

// 8-bit rendering of one perturbation frame: v -> (v + xi) * 255 / (2 xi).
std::vector<std::uint8_t> perturbation_to_rgb8(const Tensor& frame, float xi);

}  // namespace vidup
