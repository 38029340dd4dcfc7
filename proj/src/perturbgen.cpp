#include "vidup/perturbgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vidup/checkpoint.hpp"
#include "vidup/errors.hpp"

namespace vidup {

using nn::Dims3;

namespace {

constexpr int kStages = 5;

// Output extent reachable from a seed of size out / 2^(strided layers).
int seed_extent(int out, int strided_layers, const char* what) {
  const int f = 1 << strided_layers;
  if (out < f || out % f) {
    throw ConfigError(std::string("generator config: ") + what + " " + std::to_string(out) +
                      " unreachable by the stride schedule (needs a multiple of " + std::to_string(f) + ")");
  }
  return out / f;
}

Tensor channels_last(const Tensor& x) {
  const int n = x.dim(0), C = x.dim(1), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  Tensor out({n, T, H, W, C});
  const std::size_t vol = static_cast<std::size_t>(T) * H * W;
  for (int b = 0; b < n; ++b) {
    const float* src = x.slice(b).data();
    float* dst = out.slice(b).data();
    for (std::size_t p = 0; p < vol; ++p) {
      for (int c = 0; c < C; ++c) dst[p * C + static_cast<std::size_t>(c)] = src[static_cast<std::size_t>(c) * vol + p];
    }
  }
  return out;
}

Tensor channels_first(const Tensor& x) {
  const int n = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3), C = x.dim(4);
  Tensor out({n, C, T, H, W});
  const std::size_t vol = static_cast<std::size_t>(T) * H * W;
  for (int b = 0; b < n; ++b) {
    const float* src = x.slice(b).data();
    float* dst = out.slice(b).data();
    for (std::size_t p = 0; p < vol; ++p) {
      for (int c = 0; c < C; ++c) dst[static_cast<std::size_t>(c) * vol + p] = src[p * C + static_cast<std::size_t>(c)];
    }
  }
  return out;
}

}  // namespace

std::string_view mode_name(GeneratorMode m) { return m == GeneratorMode::Clip3d ? "clip3d" : "frame2d"; }

GeneratorMode parse_generator_mode(std::string_view s) {
  if (s == "clip3d") return GeneratorMode::Clip3d;
  if (s == "frame2d") return GeneratorMode::Frame2d;
  throw ConfigError("generator config: mode must be clip3d or frame2d, got '" + std::string(s) + "'");
}

void GeneratorConfig::validate() const {
  if (!(xi > 0.0f)) throw ConfigError("generator config: xi must be > 0");
  if (noise_dim < 1) throw ConfigError("generator config: noise_dim must be >= 1");
  if (channels < 1) throw ConfigError("generator config: channels must be >= 1");
  if (filters.size() != kStages - 1) throw ConfigError("generator config: filters must list 4 hidden layer widths");
  for (int f : filters) {
    if (f < 1) throw ConfigError("generator config: filters entries must be positive");
  }
  if (mode == GeneratorMode::Clip3d) seed_extent(window, kStages - 1, "window");
  if (window < 1) throw ConfigError("generator config: window must be >= 1");
  seed_extent(height, kStages - 1, "height");
  seed_extent(width, kStages - 1, "width");
}

io::Json to_json(const GeneratorConfig& c) {
  return {{"mode", mode_name(c.mode)}, {"window", c.window},   {"height", c.height},
          {"width", c.width},          {"channels", c.channels}, {"noise_dim", c.noise_dim},
          {"xi", c.xi},                {"filters", c.filters}, {"seed", c.seed}};
}

GeneratorConfig generator_config_from_json(const io::Json& j) {
  constexpr std::string_view ctx = "generator config";
  GeneratorConfig c;
  c.mode = parse_generator_mode(io::get_string(j, "mode", ctx));
  c.window = io::get_int(j, "window", ctx);
  c.height = io::get_int(j, "height", ctx);
  c.width = io::get_int(j, "width", ctx);
  c.channels = io::get_int(j, "channels", ctx);
  c.noise_dim = io::get_int(j, "noise_dim", ctx);
  c.xi = static_cast<float>(io::get_number(j, "xi", ctx));
  const Shape f = io::get_shape(j, "filters", ctx);
  c.filters.assign(f.begin(), f.end());
  c.seed = io::field(j, "seed", ctx).get<std::uint64_t>();
  return c;
}

GeneratorNet::GeneratorNet(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const bool temporal = cfg_.mode == GeneratorMode::Clip3d;
  const Dims3 seed{temporal ? seed_extent(cfg_.window, kStages - 1, "window") : 1,
                   seed_extent(cfg_.height, kStages - 1, "height"), seed_extent(cfg_.width, kStages - 1, "width")};
  body_.add<nn::Broadcast3d>(seed);
  int in_c = cfg_.noise_dim;
  for (int layer = 0; layer < kStages; ++layer) {
    const int st = layer == 0 || !temporal ? 1 : 2;
    const int ss = layer == 0 ? 1 : 2;
    const bool last = layer == kStages - 1;
    const int out_c = last ? cfg_.channels : cfg_.filters[static_cast<std::size_t>(layer)];
    body_.add<nn::ConvTranspose3d>("deconv" + std::to_string(layer + 1), in_c, out_c, Dims3{3, 3, 3}, Dims3{st, ss, ss},
                                   Dims3{1, 1, 1}, Dims3{st - 1, ss - 1, ss - 1}, rng);
    if (!last) {
      body_.add<nn::BatchNorm3d>("bn" + std::to_string(layer + 1), out_c);
      body_.add<nn::ReLU>();
    }
    in_c = out_c;
  }
  body_.add<nn::ScaledTanh>(cfg_.xi);
}

Tensor GeneratorNet::forward(const Tensor& z, nn::Mode mode, nn::Tape* tape) const {
  if (z.rank() != 2 || z.dim(1) != cfg_.noise_dim) {
    throw ShapeError("generator: expected noise [N, " + std::to_string(cfg_.noise_dim) + "], got " + shape_str(z.shape()));
  }
  return channels_last(body_.forward(z, mode, tape));
}

void GeneratorNet::backward(const Tensor& dp, const nn::Tape& tape, std::vector<Tensor>& grads) const {
  body_.backward(channels_first(dp), tape, &grads, false);
}

void GeneratorNet::recalibrate(int batches, int batch_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int i = 0; i < batches; ++i) {
    nn::Tape tape;
    body_.forward(sample_noise_batch(batch_size, cfg_.noise_dim, rng), nn::Mode::Training, &tape);
    body_.commit_statistics(tape, 1.0f / static_cast<float>(i + 1));
  }
}

GeneratorNet build_generator(const GeneratorConfig& cfg) { return GeneratorNet(cfg); }

NoiseVector sample_noise(int dim, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("sample_noise: dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  NoiseVector z;
  z.z.resize(static_cast<std::size_t>(dim));
  for (float& v : z.z) v = u(rng);
  return z;
}

Tensor sample_noise_batch(int n, int dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor z({n, dim});
  for (float& v : z.values()) v = u(rng);
  return z;
}

Tensor generate(const GeneratorNet& gen, const NoiseVector& z) {
  if (z.dim() != gen.config().noise_dim) {
    throw ShapeError("generate: noise length " + std::to_string(z.dim()) + " does not match generator dimension " +
                     std::to_string(gen.config().noise_dim));
  }
  Tensor out = gen.forward(Tensor({1, z.dim()}, z.z), nn::Mode::Inference, nullptr);
  Shape s(out.shape().begin() + 1, out.shape().end());
  out.reshape(std::move(s));
  return out;
}

PerturbationClip generate_clip(const GeneratorNet& gen, const NoiseVector& z) {
  if (gen.mode() != GeneratorMode::Clip3d) throw ConfigError("generate_clip: generator is not clip3d");
  return {generate(gen, z)};
}

PerturbationFrame generate_frame(const GeneratorNet& gen, const NoiseVector& z) {
  if (gen.mode() != GeneratorMode::Frame2d) throw ConfigError("generate_frame: generator is not frame2d");
  Tensor f = generate(gen, z);
  Shape s(f.shape().begin() + 1, f.shape().end());
  f.reshape(std::move(s));
  return {std::move(f)};
}

Tensor roll_frames(const Tensor& frames, int offset) {
  const int w = frames.dim(0);
  const int o = ((offset % w) + w) % w;
  Tensor out(frames.shape());
  for (int i = 0; i < w; ++i) {
    const auto src = frames.slice((i + o) % w);
    std::copy(src.begin(), src.end(), out.slice(i).begin());
  }
  return out;
}

PerturbationClip roll(const PerturbationClip& p, int offset) { return {roll_frames(p.values, offset)}; }

PerturbationClip tile(const PerturbationFrame& f, int w) {
  if (w < 1) throw ConfigError("tile: w must be >= 1");
  Shape s{w};
  s.insert(s.end(), f.values.shape().begin(), f.values.shape().end());
  Tensor out(std::move(s));
  for (int i = 0; i < w; ++i) std::copy(f.values.values().begin(), f.values.values().end(), out.slice(i).begin());
  return {std::move(out)};
}

PerturbationClip as_clip(const GeneratorNet& gen, const Tensor& output, int window) {
  if (gen.mode() == GeneratorMode::Clip3d) return {output};
  Tensor frame = output;
  Shape s(frame.shape().begin() + 1, frame.shape().end());
  frame.reshape(std::move(s));
  return tile({std::move(frame)}, window);
}

void save_generator(const std::filesystem::path& dir, const GeneratorNet& gen, const io::Json& extra) {
  save_network(dir, "generator", to_json(gen.config()), extra, gen.body());
}

GeneratorNet load_generator(const std::filesystem::path& dir) {
  const io::Json meta = read_checkpoint_meta(dir, "generator");
  GeneratorNet gen(generator_config_from_json(meta["config"]));
  load_network_tensors(dir, meta, gen.body());
  return gen;
}

std::vector<std::uint8_t> perturbation_to_rgb8(const Tensor& frame, float xi) {
  std::vector<std::uint8_t> out(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const double v = (static_cast<double>(frame[i]) + xi) * 255.0 / (2.0 * xi);
    out[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return out;
}

}  // namespace vidup
