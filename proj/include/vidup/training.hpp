#pragma once
// Generator training: Adam with an exponentially decaying learning rate on one
// of the attack objectives, with run manifests and loss histories.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vidup/objectives.hpp"

namespace vidup {

struct TrainSchedule {
  double lr0 = 0.002;
  int decay_step = 2000;
  double decay_rate = 0.95;
  int steps = 3000;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

io::Json to_json(const TrainSchedule& s);
TrainSchedule schedule_from_json(const io::Json& j);

// lr0 * decay_rate^(step / decay_step), continuous in step.
double lr_at(const TrainSchedule& s, int step);

struct GeneratorTrainOptions {
  // Noise vectors per step; sample k of each half is perturbed by G(z_{k mod n}).
  int noise_batch = 4;
  // Reuse the first noise batch at every step instead of drawing fresh noise.
  bool fixed_noise = false;
  // Noise batches averaged into the normalization statistics after training.
  int recalibration_batches = 32;
  // Called every progress_every steps with (step, loss, lr) when set.
  int progress_every = 0;
  std::function<void(int, double, double)> progress;
};

io::Json to_json(const GeneratorTrainOptions& o);

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> lr;
};

struct GeneratorTrainResult {
  TrainHistory history;
  std::uint64_t classifier_hash = 0;
  double seconds = 0.0;
};

// Trains gen against the frozen classifier. The generator mode must match the
// attack (frame2d for 2ddup, clip3d otherwise). A non-finite loss restores the
// parameters of the last finite step and throws NumericalError.
GeneratorTrainResult train_generator(GeneratorNet& gen, const ClassifierNet& classifier, BalancedBatcher& batcher,
                                     AttackKind kind, const LossConfig& cfg, const TrainSchedule& sched,
                                     const GeneratorTrainOptions& opts = {});

// CSV with header step,loss,lr.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& h);

struct ArtifactRef {
  std::string role;  // "dataset", "classifier", ...
  std::filesystem::path path;
  std::string hash;  // FNV-1a of the referenced file
};

struct RunManifest {
  std::string run_id;
  AttackKind kind = AttackKind::Dup;
  std::vector<ArtifactRef> artifacts;
  io::Json generator_config;
  io::Json loss_config;
  io::Json schedule;
  io::Json options;
  std::string classifier_parameter_hash;
  double wall_seconds = 0.0;
  io::Json final_metrics = io::Json::object();
};

// Hashes path and records it; throws MissingArtifactError when absent.
ArtifactRef reference_artifact(const std::string& role, const std::filesystem::path& path);
io::Json to_json(const RunManifest& m);
// Fails with MissingArtifactError if any referenced artifact is gone.
void verify_artifacts(const RunManifest& m);

}  // namespace vidup
