#pragma once
// Attack objectives (UP, DUP, circular DUP, 2D DUP) and the balanced batcher
// that feeds them half target, half non-target clips.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "vidup/classifier.hpp"
#include "vidup/dataset.hpp"
#include "vidup/perturbgen.hpp"

namespace vidup {

enum class OffsetStrategy { SampleOne, SumAll };
std::string_view strategy_name(OffsetStrategy s);
OffsetStrategy parse_offset_strategy(std::string_view s);

enum class AttackKind { Up, Dup, Cdup, TwoDDup };
std::string_view attack_name(AttackKind k);
AttackKind parse_attack_kind(std::string_view s);
// Generator mode each attack trains.
GeneratorMode attack_generator_mode(AttackKind k);

struct LossConfig {
  double lambda = 1.0;
  double eps_log = 1e-8;
  OffsetStrategy offset_strategy = OffsetStrategy::SampleOne;

  void validate() const;  // throws ConfigError
};

io::Json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const io::Json& j);

// Sum of -log(1 - q) with q clamped to [eps_log, 1 - eps_log]. When grad is
// non-null it receives dL/dq per entry (zero where the clamp is active).
double up_loss(std::span<const double> q_true, const LossConfig& cfg, std::vector<double>* grad = nullptr);

// lambda * sum_t -log(1 - q_t) + sum_s -log(q_s), clamped as above.
double dup_loss(std::span<const double> q_target, std::span<const double> q_nontarget, const LossConfig& cfg,
                std::vector<double>* grad_target = nullptr, std::vector<double>* grad_nontarget = nullptr);

struct ClipBatch {
  Tensor x;  // [n, w, H, W, C]
  std::vector<int> labels;
  int size() const { return static_cast<int>(labels.size()); }
};

ClipBatch make_batch(const ClipDataset& data, std::span<const std::size_t> indices);

struct ObjectiveValue {
  double loss = 0.0;
  double target_term = 0.0;     // mean -log(1 - q) over the target half
  double nontarget_term = 0.0;  // mean -log(q) (UP: -log(1 - q)) over the other half
  Tensor grad;                  // dL/dperturbations when requested, same shape as the input perturbations
};

// Batch objective on clip perturbations P [B, w, H, W, C]; sample k of each
// half sees P[k mod B] rolled by every offset in offsets, and the loss is
// averaged over offsets. Per half the loss is a mean, so
//   DUP: lambda * mean_T -log(1 - q) + mean_S -log(q)
//   UP:  mean over both halves of -log(1 - q).
// Cdup and TwoDDup use the DUP form.
ObjectiveValue batch_objective(const ClassifierNet& classifier, AttackKind kind, const ClipBatch& targets,
                               const ClipBatch& nontargets, const Tensor& perturbations, std::span<const int> offsets,
                               const LossConfig& cfg, bool want_grad);

// Offsets a circular objective averages over: all of 0..w-1 for SumAll, one
// uniform draw for SampleOne.
std::vector<int> objective_offsets(OffsetStrategy s, int w, std::mt19937_64& rng);

// Circular DUP loss of p = generate(gen, z).
double cdup_loss(const GeneratorNet& gen, const ClassifierNet& classifier, const ClipBatch& targets,
                 const ClipBatch& nontargets, const NoiseVector& z, const LossConfig& cfg, std::mt19937_64& rng);

// DUP loss on x + tile(generate(gen2d, z), w).
double twod_dup_loss(const GeneratorNet& gen2d, const ClassifierNet& classifier, const ClipBatch& targets,
                     const ClipBatch& nontargets, const NoiseVector& z, const LossConfig& cfg);

class BalancedBatcher {
 public:
  // Non-target clips are thinned to max(1, n / undersample_factor) per epoch.
  BalancedBatcher(ClipDataset target_pool, ClipDataset nontarget_pool, int undersample_factor, int batch,
                  std::uint64_t seed);

  // batch / 2 target clips and batch / 2 non-target clips. Within an epoch
  // clips are drawn without replacement; an exhausted pool starts a new epoch
  // with a fresh deterministic shuffle and the half is completed from it.
  std::pair<ClipBatch, ClipBatch> next_batch();

  int batch() const { return batch_; }
  int undersample_factor() const { return factor_; }
  std::size_t nontargets_per_epoch() const;
  const ClipDataset& target_pool() const { return target_; }
  const ClipDataset& nontarget_pool() const { return nontarget_; }

 private:
  struct Cursor {
    std::vector<std::size_t> order;
    std::size_t next = 0;
    std::uint64_t epoch = 0;
  };
  void refill(Cursor& c, std::size_t pool_size, std::size_t visible, std::uint64_t salt);
  std::vector<std::size_t> draw(Cursor& c, std::size_t pool_size, std::size_t visible, std::uint64_t salt, int n);

  ClipDataset target_, nontarget_;
  int factor_, batch_;
  std::uint64_t seed_;
  Cursor tcur_, scur_;
};

}  // namespace vidup
