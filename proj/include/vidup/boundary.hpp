#pragma once
// Boundary-effect study: per-clip iterative attacks on temporally staggered
// windows, their frame-wise correlation, magnitude profile, and the success
// of a perturbation read at a shifted alignment.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vidup/classifier.hpp"
#include "vidup/perturbgen.hpp"

namespace vidup {

struct BimConfig {
  double eps = 10.0;
  double step = 1.0;
  int iters = 14;

  void validate() const;  // throws ConfigError
};

io::Json to_json(const BimConfig& c);
BimConfig bim_config_from_json(const io::Json& j);

// Untargeted basic iterative attack away from `label`, ascending the
// cross-entropy of the clean label. x + delta stays in [0, 255].
PerturbationClip bim_attack(const ClassifierNet& classifier, const Tensor& clip, int label, const BimConfig& cfg);
PerturbationClip bim_attack(const ClassifierNet& classifier, const VideoClip& clip, const BimConfig& cfg);

// For j = 0..w-1, attacks the window in which frame `anchor` sits at position j
// (the window starting at anchor - j), labelled by its majority label.
std::vector<PerturbationClip> staggered_perturbations(const ClassifierNet& classifier, const LabeledStream& video,
                                                      int anchor, const BimConfig& cfg);

// <a, b> / (|a| |b|); 0 when either tensor is all zeros.
double normalized_correlation(std::span<const float> a, std::span<const float> b);
double normalized_correlation(const Tensor& a, const Tensor& b);

struct CorrelationMatrix {
  int w = 0;
  std::vector<double> m;  // row-major w x w
  int n_samples = 0;
  double at(int r, int c) const { return m[static_cast<std::size_t>(r) * w + c]; }
  // Mean of entries with |r - c| >= min_gap.
  double mean_at_distance(int min_gap) const;
};

// One sample: the w staggered perturbations of one (video, anchor) pair.
using StaggeredSet = std::vector<PerturbationClip>;

// M[r][c] = mean over samples of the correlation between the anchor frame as
// perturbed by the offset-r attack (its frame r) and by the offset-c attack (frame c).
CorrelationMatrix correlation_matrix(const std::vector<StaggeredSet>& samples);

// Samples anchors_per_video anchors per video (seeded) and runs the staggered attacks.
std::vector<StaggeredSet> staggered_samples(const ClassifierNet& classifier, const std::vector<LabeledStream>& videos,
                                            int anchors_per_video, std::uint64_t seed, const BimConfig& cfg);

CorrelationMatrix correlation_matrix(const ClassifierNet& classifier, const std::vector<LabeledStream>& videos,
                                     int anchors_per_video, std::uint64_t seed, const BimConfig& cfg = {});

// Mean |value| per within-clip frame position over all perturbations.
std::vector<double> magnitude_profile(const std::vector<PerturbationClip>& perturbations);
std::vector<double> magnitude_profile(const std::vector<StaggeredSet>& samples);

// Entry o: fraction of clips misclassified on clamp(x + roll(p, o)).
std::vector<double> mismatch_curve(const ClassifierNet& classifier, const std::vector<VideoClip>& clips,
                                   const PerturbationClip& p);
// Same with one perturbation per clip (perturbations[i] belongs to clips[i]).
std::vector<double> mismatch_curve(const ClassifierNet& classifier, const std::vector<VideoClip>& clips,
                                   const std::vector<PerturbationClip>& perturbations);

void write_matrix_csv(const std::filesystem::path& path, const CorrelationMatrix& m);
void write_vector_csv(const std::filesystem::path& path, const std::string& column, const std::vector<double>& v);

}  // namespace vidup
