#pragma once
// C3D-style spatio-temporal classifier: 3x3x3 convolutions, pooling that is
// spatial-only after the first stage and spatio-temporal afterwards, two fully
// connected layers, and a softmax over classes.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vidup/dataset.hpp"
#include "vidup/io.hpp"
#include "vidup/nn/layers.hpp"

namespace vidup {

struct ClassifierConfig {
  int classes = 8;
  int window = 16;
  int height = 32;
  int width = 32;
  int channels = 3;
  std::vector<int> conv_channels{16, 32, 64, 64, 64};
  int fc_width = 128;
  std::uint64_t seed = 0;
  // Clamp inputs to [0, 255] before the network sees them.
  bool clamp_input = true;

  void validate() const;  // throws ConfigError
  Shape clip_shape() const { return {window, height, width, channels}; }
};

io::Json to_json(const ClassifierConfig& c);
ClassifierConfig classifier_config_from_json(const io::Json& j);

struct ScoreVector {
  std::vector<float> scores;
  int argmax() const;
};

class ClassifierNet {
 public:
  explicit ClassifierNet(ClassifierConfig cfg);

  const ClassifierConfig& config() const { return cfg_; }
  nn::Sequential& body() { return body_; }
  const nn::Sequential& body() const { return body_; }

  // batch is [N, w, H, W, C] in raw pixel units. Returns logits [N, K].
  Tensor logits(const Tensor& batch) const;
  // Softmax scores [N, K].
  Tensor scores(const Tensor& batch) const;

  // Forward pass that records a tape for backward_input/backward_params.
  Tensor forward_logits(const Tensor& batch, nn::Tape& tape, nn::Mode mode) const;
  // dL/dbatch in [N, w, H, W, C] layout from dL/dlogits.
  Tensor backward_input(const Tensor& dlogits, const nn::Tape& tape) const;
  // Accumulates parameter gradients without propagating to the input.
  void backward_params(const Tensor& dlogits, const nn::Tape& tape, std::vector<Tensor>& grads) const;

  std::uint64_t parameter_hash() const;

 private:
  Tensor to_network_layout(const Tensor& batch) const;
  ClassifierConfig cfg_;
  nn::Sequential body_;
};

ClassifierNet build_classifier(const ClassifierConfig& cfg);

// Single clip [w, H, W, C].
ScoreVector classify(const ClassifierNet& net, const Tensor& clip);

// Stacks clips into a [N, w, H, W, C] batch.
Tensor stack_clips(const std::vector<const Tensor*>& clips);

// dL/dlogits for mean cross-entropy on labels; returns the mean loss.
double cross_entropy_grad(const Tensor& logits, const std::vector<int>& labels, Tensor& dlogits);

struct ClassifierTrainOptions {
  int batch = 16;
  bool verbose = false;
};

struct ClassifierTrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
};

// Adam on mean cross-entropy. Throws NumericalError if the loss becomes non-finite.
ClassifierTrainReport train_classifier(ClassifierNet& net, const ClipDataset& data, int epochs, float lr,
                                       std::uint64_t seed, const ClassifierTrainOptions& opts = {});

// Predicted labels for every clip, evaluated in chunks.
std::vector<int> predict(const ClassifierNet& net, const std::vector<const Tensor*>& clips, int chunk = 32);
double accuracy(const ClassifierNet& net, const ClipDataset& data);

void save_classifier(const std::filesystem::path& dir, const ClassifierNet& net, const io::Json& extra);
ClassifierNet load_classifier(const std::filesystem::path& dir);

}  // namespace vidup
