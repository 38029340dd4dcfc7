#pragma once
// Sliding-window classification of perturbed streams: per-offset attack
// success, clip-level counterparts, and smoothed score curves.

#include <filesystem>
#include <set>
#include <vector>

#include "vidup/classifier.hpp"
#include "vidup/perturbgen.hpp"

namespace vidup {

struct SlidingWindowConfig {
  int w = 16;
  int stride = 1;
  int start = 0;  // first frame the classifier reads

  void validate() const;  // throws ConfigError
};

io::Json to_json(const SlidingWindowConfig& c);
SlidingWindowConfig window_config_from_json(const io::Json& j);

// Frame t receives p[(t + attacker_phase) mod w]; the result is clamped to [0, 255].
LabeledStream inject(const LabeledStream& stream, const PerturbationClip& p, int attacker_phase);

// Majority label of frames [start, start + w); ties go to the earlier segment.
int window_truth(const LabeledStream& stream, int window_start, int w);

// Window start positions for cfg over a stream of num_frames frames.
std::vector<int> window_starts(int num_frames, const SlidingWindowConfig& cfg);

struct OffsetRates {
  std::vector<double> target;     // misclassification rate of target-truth windows
  std::vector<double> nontarget;  // correct-classification rate of the other windows
  double target_mean = 0.0;
  double nontarget_mean = 0.0;
};

struct StreamEvalReport {
  SlidingWindowConfig config;
  std::vector<int> targets;
  int windows = 0;
  int target_windows = 0;
  int nontarget_windows = 0;
  // Offset o is the phase of the perturbation stream relative to the first
  // window: the window at cfg.start reads x + roll(p, o).
  OffsetRates all;
  // Same rates restricted to windows lying inside a single segment.
  OffsetRates interior;
  int interior_windows = 0;
};

StreamEvalReport evaluate_stream(const ClassifierNet& classifier, const LabeledStream& stream,
                                 const PerturbationClip& p, const std::set<int>& targets,
                                 const SlidingWindowConfig& cfg);

// Clip-level counterpart: every test clip x is classified on clamp(x + roll(p, o)).
struct ClipEvalReport {
  std::vector<int> targets;
  int target_clips = 0;
  int nontarget_clips = 0;
  OffsetRates rates;
};

ClipEvalReport evaluate_clips(const ClassifierNet& classifier, const ClipDataset& clips, const PerturbationClip& p,
                              const std::set<int>& targets);

// Per-window score vectors, each class smoothed by a centred moving average of
// width smooth_k (truncated at the ends). Result is [windows, K].
Tensor score_curves(const ClassifierNet& classifier, const LabeledStream& stream, const SlidingWindowConfig& cfg,
                    int smooth_k);
Tensor smooth_scores(const Tensor& raw, int smooth_k);

void write_rates_csv(const std::filesystem::path& path, const OffsetRates& r);
io::Json to_json(const OffsetRates& r);
io::Json to_json(const StreamEvalReport& r);
io::Json to_json(const ClipEvalReport& r);
void write_score_curves_csv(const std::filesystem::path& path, const Tensor& curves,
                            const std::vector<std::string>& class_names);

}  // namespace vidup
