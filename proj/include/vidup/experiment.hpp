#pragma once
// Experiment recipes behind the command-line tool: one strict JSON config, and
// one function per stage that reads upstream artifacts from the output
// directory and writes its own, together with a run.json manifest.
//
// Layout under output_dir:
//   data/                       dataset + evaluation stream + boundary videos
//   classifier/                 checkpoint, run.json
//   attacks/<kind>_<targets>/   generator checkpoint, history.csv, run.json
//   eval/<kind>_<targets>/      per-offset CSVs, report.json, figures
//   boundary/                   correlation, magnitude and mismatch CSVs + figures
//   render/<kind>_<targets>/    perturbation frames as PNG

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vidup/boundary.hpp"
#include "vidup/classifier.hpp"
#include "vidup/dataset.hpp"
#include "vidup/objectives.hpp"
#include "vidup/perturbgen.hpp"
#include "vidup/streameval.hpp"
#include "vidup/training.hpp"

namespace vidup {

struct ClassifierSection {
  std::vector<int> conv_channels{16, 32, 64, 64, 64};
  int fc_width = 128;
  bool clamp_input = true;
  int epochs = 8;
  double lr = 0.002;
  int batch = 16;
};

struct AttackSection {
  std::set<int> targets{2};
  GeneratorConfig generator;  // mode, shape and seed are filled in per run
  LossConfig loss;
  // Replaces loss.lambda for the listed attack kinds.
  std::map<AttackKind, double> lambda_by_kind;
  TrainSchedule schedule;     // seed is derived from the global seed
  int batch = 32;
  int undersample_factor = 1;
  int noise_batch = 4;
  bool fixed_noise = false;
  int recalibration_batches = 32;
};

struct EvalSection {
  int stride = 1;
  int start = 0;
  int segments_per_class = 4;
  int segment_length = 32;
  int smooth_k = 5;
};

struct BoundarySection {
  BimConfig bim;
  int videos = 4;
  int video_length = 48;
  int anchors_per_video = 4;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";
  SynthConfig data;  // data.seed is derived from seed
  ClassifierSection classifier;
  AttackSection attack;
  EvalSection eval;
  BoundarySection boundary;

  void validate() const;  // throws ConfigError

  SynthConfig synth_config() const;
  ClassifierConfig classifier_config() const;
  GeneratorConfig generator_config(AttackKind kind) const;
  LossConfig loss_config(AttackKind kind) const;
  SlidingWindowConfig window_config() const;
  TrainSchedule schedule() const;
};

// Keys absent from the document keep their defaults; unknown keys, wrong types
// and invalid values raise ConfigError naming the field.
ExperimentConfig experiment_config_from_json(const io::Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
io::Json to_json(const ExperimentConfig& c);

// Seeds of the individual stages, all derived from the global seed.
enum class SeedSalt : std::uint64_t {
  Data = 1,
  ClassifierInit,
  ClassifierTrain,
  GeneratorInit,
  GeneratorTrain,
  Batcher,
  EvalNoise,
  EvalStream,
  BoundaryVideos,
  BoundaryAnchors,
};
std::uint64_t stage_seed(const ExperimentConfig& c, SeedSalt salt);

// "cdup_2" for C-DUP against class 2; "up_0-3" for targets {0, 3}.
std::string run_name(AttackKind kind, const std::set<int>& targets);

struct StagePaths {
  std::filesystem::path data, classifier, boundary;
  std::filesystem::path attack(AttackKind kind, const std::set<int>& targets) const;
  std::filesystem::path eval(AttackKind kind, const std::set<int>& targets) const;
  std::filesystem::path render(AttackKind kind, const std::set<int>& targets) const;
};
StagePaths stage_paths(const std::filesystem::path& output_dir);

struct StageOptions {
  bool force = false;
  // Progress messages; silent when empty.
  std::function<void(const std::string&)> log;
};

// Results returned by the stages for programmatic use (tests, acceptance runs).
struct DataResult {
  std::filesystem::path dir;
};
struct ClassifierResult {
  std::filesystem::path dir;
  double test_accuracy = 0.0;
  std::vector<double> epoch_loss;
};
struct AttackResult {
  std::filesystem::path dir;
  TrainHistory history;
};
struct EvalResult {
  std::filesystem::path dir;
  AttackKind kind = AttackKind::Dup;
  StreamEvalReport stream;
  ClipEvalReport clips;
};
struct BoundaryResult {
  std::filesystem::path dir;
  CorrelationMatrix correlation;
  std::vector<double> magnitude;
  std::vector<double> mismatch;
};

DataResult run_data(const ExperimentConfig& c, const StageOptions& opts = {});
ClassifierResult run_train_classifier(const ExperimentConfig& c, const StageOptions& opts = {});
AttackResult run_train_attack(const ExperimentConfig& c, AttackKind kind, const StageOptions& opts = {});
EvalResult run_eval(const ExperimentConfig& c, AttackKind kind, const StageOptions& opts = {});
BoundaryResult run_boundary(const ExperimentConfig& c, const StageOptions& opts = {});
std::filesystem::path run_render(const ExperimentConfig& c, AttackKind kind, const StageOptions& opts = {});

// Attack kinds with a trained generator for the configured targets.
std::vector<AttackKind> trained_attacks(const ExperimentConfig& c);

// Fixed-width per-offset table of a stream report, one row per offset.
std::string format_offset_table(const StreamEvalReport& stream, const ClipEvalReport& clips);

}  // namespace vidup
