#include "vidup/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "vidup/errors.hpp"
#include "vidup/io.hpp"
#include "vidup/seeding.hpp"

namespace vidup {

namespace {

enum class Motion { Translate, Oscillate, Static };

struct ClassSpec {
  const char* name;
  Motion motion;
  double dx, dy;              // unit direction for Translate
  double speed_lo, speed_hi;  // px/frame
  int colour;                 // palette group
};

// Pairs (translate-right, fast-right) and (translate-down, fast-down) differ
// only in speed; oscillate and static share translate-left's colour.
constexpr std::array kClasses{
    ClassSpec{"translate-left", Motion::Translate, -1, 0, 1.0, 1.75, 0},
    ClassSpec{"translate-right", Motion::Translate, 1, 0, 1.0, 1.75, 1},
    ClassSpec{"translate-up", Motion::Translate, 0, -1, 1.0, 1.75, 2},
    ClassSpec{"translate-down", Motion::Translate, 0, 1, 1.0, 1.75, 3},
    ClassSpec{"oscillate", Motion::Oscillate, 1, 0, 0.0, 0.0, 0},
    ClassSpec{"static", Motion::Static, 0, 0, 0.0, 0.0, 0},
    ClassSpec{"fast-right", Motion::Translate, 1, 0, 2.25, 3.0, 1},
    ClassSpec{"fast-down", Motion::Translate, 0, 1, 2.25, 3.0, 3},
    ClassSpec{"translate-up-left", Motion::Translate, -0.7071067811865476, -0.7071067811865476, 1.0, 1.75, 2},
    ClassSpec{"translate-up-right", Motion::Translate, 0.7071067811865476, -0.7071067811865476, 1.0, 1.75, 1},
    ClassSpec{"translate-down-left", Motion::Translate, -0.7071067811865476, 0.7071067811865476, 1.0, 1.75, 0},
    ClassSpec{"translate-down-right", Motion::Translate, 0.7071067811865476, 0.7071067811865476, 1.0, 1.75, 3},
    ClassSpec{"fast-left", Motion::Translate, -1, 0, 2.25, 3.0, 0},
    ClassSpec{"fast-up", Motion::Translate, 0, -1, 2.25, 3.0, 2},
};

constexpr double kPalette[4][3] = {
    {1.0, 0.55, 0.3},
    {0.3, 1.0, 0.55},
    {0.55, 0.3, 1.0},
    {1.0, 1.0, 0.35},
};

struct MotionParams {
  double x0, y0, vx, vy;
  double amplitude, period, phase;
};

MotionParams draw_params(const ClassSpec& spec, const SynthConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  MotionParams p{};
  p.x0 = u01(rng) * cfg.width;
  p.y0 = u01(rng) * cfg.height;
  const double speed = spec.speed_lo + (spec.speed_hi - spec.speed_lo) * u01(rng);
  p.vx = spec.dx * speed;
  p.vy = spec.dy * speed;
  p.amplitude = 2.0 + u01(rng);
  p.period = 4.0 + 2.0 * u01(rng);
  p.phase = 2.0 * std::numbers::pi * u01(rng);
  return p;
}

// Length of [a, a+1) ∩ ([s, s+len) wrapped onto a circle of circumference n).
double coverage(int a, double s, double len, int n) {
  s = std::fmod(s, static_cast<double>(n));
  if (s < 0) s += n;
  double total = 0.0;
  for (int k = -1; k <= 1; ++k) {
    const double lo = std::max(static_cast<double>(a), s + k * n);
    const double hi = std::min(static_cast<double>(a + 1), s + k * n + len);
    if (hi > lo) total += hi - lo;
  }
  return total;
}

// Renders frames [0, count) of one motion instance into out (count x H x W x C).
void render(const ClassSpec& spec, const MotionParams& p, const SynthConfig& cfg, int count, std::mt19937_64& rng,
            float* out) {
  const int H = cfg.height, W = cfg.width, C = cfg.channels;
  const double side = H / 4.0;
  std::normal_distribution<double> noise(0.0, cfg.noise_std > 0 ? cfg.noise_std : 1.0);
  std::vector<double> colour(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    const double f = cfg.appearance_cues ? kPalette[spec.colour][c % 3] : 1.0;
    colour[static_cast<std::size_t>(c)] = cfg.contrast * f;
  }
  std::vector<double> cx(static_cast<std::size_t>(W)), cy(static_cast<std::size_t>(H));
  for (int t = 0; t < count; ++t) {
    double x = p.x0, y = p.y0;
    switch (spec.motion) {
      case Motion::Translate:
        x += p.vx * t;
        y += p.vy * t;
        break;
      case Motion::Oscillate:
        x += p.amplitude * std::sin(2.0 * std::numbers::pi * t / p.period + p.phase);
        break;
      case Motion::Static:
        break;
    }
    for (int i = 0; i < W; ++i) cx[static_cast<std::size_t>(i)] = coverage(i, x, side, W);
    for (int j = 0; j < H; ++j) cy[static_cast<std::size_t>(j)] = coverage(j, y, side, H);
    float* frame = out + static_cast<std::ptrdiff_t>(t) * H * W * C;
    for (int j = 0; j < H; ++j) {
      for (int i = 0; i < W; ++i) {
        const double cov = cx[static_cast<std::size_t>(i)] * cy[static_cast<std::size_t>(j)];
        for (int c = 0; c < C; ++c) {
          double v = cfg.background + cov * colour[static_cast<std::size_t>(c)];
          if (cfg.noise_std > 0) v += noise(rng);
          frame[(j * W + i) * C + c] = static_cast<float>(std::clamp(v, 0.0, 255.0));
        }
      }
    }
  }
}

ClipDataset render_split(const SynthConfig& cfg, Split split, int per_class) {
  ClipDataset ds;
  ds.split = split;
  ds.config = cfg;
  ds.class_names = synthetic_class_names(cfg.classes);
  const auto split_tag = static_cast<std::uint64_t>(split == Split::Train ? 1 : 2);
  for (int label = 0; label < cfg.classes; ++label) {
    for (int i = 0; i < per_class; ++i) {
      std::mt19937_64 rng(derive_seed(cfg.seed, split_tag, static_cast<std::uint64_t>(label),
                                      static_cast<std::uint64_t>(i)));
      const ClassSpec& spec = kClasses[static_cast<std::size_t>(label)];
      const MotionParams p = draw_params(spec, cfg, rng);
      VideoClip clip{Tensor({cfg.window, cfg.height, cfg.width, cfg.channels}), label};
      render(spec, p, cfg, cfg.window, rng, clip.frames.data());
      ds.clips.push_back(std::move(clip));
    }
  }
  return ds;
}

}  // namespace

io::Json to_json(const SynthConfig& c) {
  return {{"classes", c.classes},
          {"height", c.height},
          {"width", c.width},
          {"channels", c.channels},
          {"window", c.window},
          {"clips_per_class", c.clips_per_class},
          {"test_clips_per_class", c.test_clips_per_class},
          {"seed", c.seed},
          {"noise_std", c.noise_std},
          {"background", c.background},
          {"contrast", c.contrast},
          {"appearance_cues", c.appearance_cues}};
}

SynthConfig synth_config_from_json(const io::Json& j) {
  constexpr std::string_view ctx = "synth config";
  SynthConfig c;
  c.classes = io::get_int(j, "classes", ctx);
  c.height = io::get_int(j, "height", ctx);
  c.width = io::get_int(j, "width", ctx);
  c.channels = io::get_int(j, "channels", ctx);
  c.window = io::get_int(j, "window", ctx);
  c.clips_per_class = io::get_int(j, "clips_per_class", ctx);
  c.test_clips_per_class = io::get_int(j, "test_clips_per_class", ctx);
  const auto& seed = io::field(j, "seed", ctx);
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) throw ConfigError("synth config: field 'seed' must be an integer");
  c.seed = seed.get<std::uint64_t>();
  c.noise_std = static_cast<float>(io::get_number(j, "noise_std", ctx));
  c.background = static_cast<float>(io::get_number(j, "background", ctx));
  c.contrast = static_cast<float>(io::get_number(j, "contrast", ctx));
  c.appearance_cues = io::get_bool(j, "appearance_cues", ctx);
  return c;
}

void SynthConfig::validate() const {
  if (classes < 2) throw ConfigError("synth config: classes must be >= 2");
  if (classes > max_synthetic_classes()) {
    throw ConfigError("synth config: classes must be <= " + std::to_string(max_synthetic_classes()));
  }
  if (height < 16 || width < 16) throw ConfigError("synth config: height and width must be >= 16");
  if (channels < 1) throw ConfigError("synth config: channels must be >= 1");
  if (window < 2) throw ConfigError("synth config: window must be >= 2");
  if (clips_per_class < 1 || test_clips_per_class < 1) {
    throw ConfigError("synth config: clips_per_class and test_clips_per_class must be >= 1");
  }
  if (!(noise_std >= 0.0f)) throw ConfigError("synth config: noise_std must be >= 0");
  if (!(background >= 0.0f && background <= 255.0f)) throw ConfigError("synth config: background must lie in [0, 255]");
  if (!(contrast > 0.0f)) throw ConfigError("synth config: contrast must be > 0");
}

std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

int LabeledStream::label_at(int t) const {
  for (const Segment& s : segments) {
    if (t >= s.start && t < s.end) return s.label;
  }
  throw ShapeError("frame " + std::to_string(t) + " outside stream");
}

int max_synthetic_classes() { return static_cast<int>(kClasses.size()); }

std::vector<std::string> synthetic_class_names(int k) {
  std::vector<std::string> names;
  for (int i = 0; i < k && i < max_synthetic_classes(); ++i) names.emplace_back(kClasses[static_cast<std::size_t>(i)].name);
  return names;
}

int class_id(const std::vector<std::string>& names, std::string_view name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

DatasetSplits make_synthetic_dataset(const SynthConfig& cfg) {
  cfg.validate();
  return {render_split(cfg, Split::Train, cfg.clips_per_class), render_split(cfg, Split::Test, cfg.test_clips_per_class)};
}

LabeledStream compose_stream(const ClipDataset& dataset, const std::vector<int>& sequence, std::uint64_t seed,
                             int segment_length) {
  if (sequence.empty()) throw ConfigError("compose_stream: empty class sequence");
  const SynthConfig& cfg = dataset.config;
  const int len = segment_length > 0 ? segment_length : cfg.window;
  if (len < cfg.window) throw ConfigError("compose_stream: segment_length must be >= window size");
  for (int c : sequence) {
    if (c < 0 || c >= dataset.num_classes()) throw ConfigError("compose_stream: class id " + std::to_string(c) + " out of range");
  }
  const int total = len * static_cast<int>(sequence.size());
  LabeledStream stream;
  stream.frames = Tensor({total, cfg.height, cfg.width, cfg.channels});
  const std::size_t frame_size = static_cast<std::size_t>(cfg.height) * cfg.width * cfg.channels;
  for (std::size_t s = 0; s < sequence.size(); ++s) {
    const int label = sequence[s];
    std::mt19937_64 rng(derive_seed(seed, 3, s, static_cast<std::uint64_t>(label)));
    const ClassSpec& spec = kClasses[static_cast<std::size_t>(label)];
    const MotionParams p = draw_params(spec, cfg, rng);
    const int start = static_cast<int>(s) * len;
    render(spec, p, cfg, len, rng, stream.frames.data() + static_cast<std::size_t>(start) * frame_size);
    stream.segments.push_back({start, start + len, label});
  }
  return stream;
}

std::pair<ClipDataset, ClipDataset> split_target(const ClipDataset& dataset, const std::set<int>& targets) {
  if (targets.empty()) throw ConfigError("split_target: target set is empty");
  for (int t : targets) {
    if (t < 0 || t >= dataset.num_classes()) throw ConfigError("split_target: target class " + std::to_string(t) + " out of range");
  }
  if (static_cast<int>(targets.size()) >= dataset.num_classes()) {
    throw ConfigError("split_target: target set covers every class");
  }
  ClipDataset target, rest;
  for (ClipDataset* d : {&target, &rest}) {
    d->class_names = dataset.class_names;
    d->split = dataset.split;
    d->config = dataset.config;
  }
  for (const VideoClip& c : dataset.clips) (targets.contains(c.label) ? target : rest).clips.push_back(c);
  return {std::move(target), std::move(rest)};
}

Tensor stream_window(const LabeledStream& stream, int t0, int w) {
  if (t0 < 0 || t0 + w > stream.num_frames()) {
    throw ShapeError("stream window [" + std::to_string(t0) + ", " + std::to_string(t0 + w) + ") outside stream of " +
                     std::to_string(stream.num_frames()) + " frames");
  }
  const auto& s = stream.frames.shape();
  const std::size_t frame = static_cast<std::size_t>(s[1]) * s[2] * s[3];
  std::vector<float> v(stream.frames.data() + static_cast<std::size_t>(t0) * frame,
                       stream.frames.data() + static_cast<std::size_t>(t0 + w) * frame);
  return Tensor({w, s[1], s[2], s[3]}, std::move(v));
}

// --- persistence -----------------------------------------------------------------------

namespace {

io::Json tensor_entry(const std::string& file, const Shape& shape) {
  return {{"file", file}, {"dtype", "float32"}, {"byte_order", "little"}, {"order", "row-major"}, {"shape", shape}};
}

void check_tensor_entry(const io::Json& e, const std::string& ctx) {
  if (io::get_string(e, "dtype", ctx) != "float32") throw ConfigError(ctx + ": field 'dtype' must be float32");
  if (io::get_string(e, "order", ctx) != "row-major") throw ConfigError(ctx + ": field 'order' must be row-major");
  if (io::get_string(e, "byte_order", ctx) != "little") throw ConfigError(ctx + ": field 'byte_order' must be little");
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const DatasetSplits& data) {
  const SynthConfig& cfg = data.train.config;
  io::Json splits = io::Json::object();
  for (const ClipDataset* ds : {&data.train, &data.test}) {
    const std::string name(split_name(ds->split));
    const Shape shape{static_cast<int>(ds->size()), cfg.window, cfg.height, cfg.width, cfg.channels};
    std::string bytes;
    bytes.reserve(shape_size(shape) * sizeof(float));
    std::vector<int> labels;
    for (const VideoClip& c : ds->clips) {
      bytes += io::encode_floats(c.frames.values());
      labels.push_back(c.label);
    }
    io::atomic_write(dir / (name + ".bin"), bytes);
    io::Json entry = tensor_entry(name + ".bin", shape);
    entry["labels"] = labels;
    splits[name] = entry;
  }
  io::Json manifest{{"format", "vidup-dataset"},
                    {"version", 1},
                    {"class_names", data.train.class_names},
                    {"seed", cfg.seed},
                    {"config", to_json(cfg)},
                    {"split_sizes", {{"train", data.train.size()}, {"test", data.test.size()}}},
                    {"splits", splits}};
  io::write_json(dir / "manifest.json", manifest);
}

DatasetSplits load_dataset(const std::filesystem::path& dir) {
  const io::Json m = io::read_json(dir / "manifest.json");
  constexpr std::string_view ctx = "dataset manifest";
  if (io::get_string(m, "format", ctx) != "vidup-dataset") throw ConfigError("dataset manifest: field 'format' is not vidup-dataset");
  const SynthConfig cfg = synth_config_from_json(io::field(m, "config", ctx));
  cfg.validate();
  const io::Json& names = io::field(m, "class_names", ctx);
  if (!names.is_array() || static_cast<int>(names.size()) != cfg.classes) {
    throw ConfigError("dataset manifest: field 'class_names' must list one name per class");
  }
  DatasetSplits out;
  const io::Json& splits = io::field(m, "splits", ctx);
  for (Split split : {Split::Train, Split::Test}) {
    const std::string name(split_name(split));
    const std::string sctx = "dataset manifest split '" + name + "'";
    const io::Json& e = io::field(splits, name, ctx);
    check_tensor_entry(e, sctx);
    const Shape shape = io::get_shape(e, "shape", sctx);
    if (shape.size() != 5 || shape[1] != cfg.window || shape[2] != cfg.height || shape[3] != cfg.width ||
        shape[4] != cfg.channels) {
      throw ConfigError(sctx + ": field 'shape' disagrees with config");
    }
    const io::Json& labels = io::field(e, "labels", sctx);
    if (!labels.is_array() || static_cast<int>(labels.size()) != shape[0]) {
      throw ConfigError(sctx + ": field 'labels' must have one entry per clip");
    }
    Tensor all(shape);
    io::decode_floats(io::read_file(dir / io::get_string(e, "file", sctx)), all.values(), sctx);
    ClipDataset& ds = split == Split::Train ? out.train : out.test;
    ds.split = split;
    ds.config = cfg;
    ds.class_names = names.get<std::vector<std::string>>();
    for (int i = 0; i < shape[0]; ++i) {
      const auto sl = all.slice(i);
      const int label = labels[static_cast<std::size_t>(i)].get<int>();
      if (label < 0 || label >= cfg.classes) throw ConfigError(sctx + ": field 'labels' holds an out-of-range class");
      ds.clips.push_back({Tensor({cfg.window, cfg.height, cfg.width, cfg.channels}, std::vector<float>(sl.begin(), sl.end())), label});
    }
  }
  return out;
}

void save_stream(const std::filesystem::path& dir, const LabeledStream& stream, const std::string& name) {
  io::atomic_write(dir / (name + ".bin"), io::encode_floats(stream.frames.values()));
  io::Json segs = io::Json::array();
  for (const Segment& s : stream.segments) segs.push_back({{"start", s.start}, {"end", s.end}, {"label", s.label}});
  io::Json j = tensor_entry(name + ".bin", stream.frames.shape());
  j["format"] = "vidup-stream";
  j["segments"] = segs;
  io::write_json(dir / (name + ".json"), j);
}

LabeledStream load_stream(const std::filesystem::path& dir, const std::string& name) {
  const io::Json j = io::read_json(dir / (name + ".json"));
  const std::string ctx = "stream manifest " + name;
  check_tensor_entry(j, ctx);
  LabeledStream s;
  s.frames = Tensor(io::get_shape(j, "shape", ctx));
  if (s.frames.rank() != 4) throw ConfigError(ctx + ": field 'shape' must have rank 4");
  io::decode_floats(io::read_file(dir / io::get_string(j, "file", ctx)), s.frames.values(), ctx);
  int expect = 0;
  for (const auto& e : io::field(j, "segments", ctx)) {
    Segment seg{io::get_int(e, "start", ctx), io::get_int(e, "end", ctx), io::get_int(e, "label", ctx)};
    if (seg.start != expect || seg.end <= seg.start) throw ConfigError(ctx + ": field 'segments' is not contiguous");
    expect = seg.end;
    s.segments.push_back(seg);
  }
  if (expect != s.num_frames()) throw ConfigError(ctx + ": field 'segments' does not cover the stream");
  return s;
}

}  // namespace vidup
