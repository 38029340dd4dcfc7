#pragma once
// Deterministic synthetic video data: a filled square moving over a noisy
// background, one motion pattern per class.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vidup/io.hpp"
#include "vidup/tensor.hpp"

namespace vidup {

struct SynthConfig {
  int classes = 8;
  int height = 32;
  int width = 32;
  int channels = 3;
  int window = 16;
  int clips_per_class = 50;       // train split
  int test_clips_per_class = 20;  // test split
  std::uint64_t seed = 0;
  float noise_std = 8.0f;
  float background = 96.0f;  // mean background level
  float contrast = 64.0f;    // shape brightness above background
  // Per-class shape colour. Classes whose colours coincide can only be told
  // apart by their motion.
  bool appearance_cues = true;

  void validate() const;  // throws ConfigError
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

io::Json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const io::Json& j);

enum class Split { Train, Test };
std::string_view split_name(Split s);

struct VideoClip {
  Tensor frames;  // [w, H, W, C], values in [0, 255]
  int label = 0;
};

struct ClipDataset {
  std::vector<VideoClip> clips;
  std::vector<std::string> class_names;
  Split split = Split::Train;
  SynthConfig config;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::size_t size() const { return clips.size(); }
};

struct DatasetSplits {
  ClipDataset train;
  ClipDataset test;
};

struct Segment {
  int start = 0;  // inclusive frame index
  int end = 0;    // exclusive
  int label = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct LabeledStream {
  Tensor frames;  // [N, H, W, C]
  std::vector<Segment> segments;
  int num_frames() const { return frames.rank() ? frames.dim(0) : 0; }
  // Label of the segment containing frame t.
  int label_at(int t) const;
};

// Largest class count the built-in motion table supports.
int max_synthetic_classes();
// Names of the first k motion classes.
std::vector<std::string> synthetic_class_names(int k);
int class_id(const std::vector<std::string>& names, std::string_view name);  // -1 when absent

DatasetSplits make_synthetic_dataset(const SynthConfig& cfg);

// Renders a fresh segment per entry of sequence, each segment_length frames
// (defaults to the window size when <= 0).
LabeledStream compose_stream(const ClipDataset& dataset, const std::vector<int>& sequence, std::uint64_t seed,
                             int segment_length = 0);

// Partition into clips whose label is in targets and the rest.
std::pair<ClipDataset, ClipDataset> split_target(const ClipDataset& dataset, const std::set<int>& targets);

// Frames [t0, t0 + w) of a stream as a clip tensor [w, H, W, C].
Tensor stream_window(const LabeledStream& stream, int t0, int w);

// Directory layout: manifest.json plus one raw little-endian float32 file per split.
void save_dataset(const std::filesystem::path& dir, const DatasetSplits& data);
DatasetSplits load_dataset(const std::filesystem::path& dir);

void save_stream(const std::filesystem::path& dir, const LabeledStream& stream, const std::string& name);
LabeledStream load_stream(const std::filesystem::path& dir, const std::string& name);

}  // namespace vidup
