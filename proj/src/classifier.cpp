#include "vidup/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "vidup/checkpoint.hpp"
#include "vidup/errors.hpp"

namespace vidup {

using nn::Dims3;

void ClassifierConfig::validate() const {
  if (classes < 2) throw ConfigError("classifier config: classes must be >= 2");
  if (window < 1 || height < 1 || width < 1 || channels < 1) throw ConfigError("classifier config: input dims must be positive");
  if (conv_channels.size() < 2) throw ConfigError("classifier config: conv_channels needs at least 2 stages");
  for (int c : conv_channels) {
    if (c < 1) throw ConfigError("classifier config: conv_channels entries must be positive");
  }
  if (fc_width < classes) throw ConfigError("classifier config: fc_width must be >= classes");
  const int stages = static_cast<int>(conv_channels.size());
  const int t_stride = 1 << (stages - 1);
  const int s_stride = 1 << stages;
  if (window % t_stride || height % s_stride || width % s_stride) {
    std::ostringstream msg;
    msg << "classifier config: input " << window << "x" << height << "x" << width << " not divisible by cumulative pool strides "
        << t_stride << "x" << s_stride << "x" << s_stride;
    throw ConfigError(msg.str());
  }
}

io::Json to_json(const ClassifierConfig& c) {
  return {{"classes", c.classes},   {"window", c.window},         {"height", c.height},
          {"width", c.width},       {"channels", c.channels},     {"conv_channels", c.conv_channels},
          {"fc_width", c.fc_width}, {"seed", c.seed},             {"clamp_input", c.clamp_input}};
}

ClassifierConfig classifier_config_from_json(const io::Json& j) {
  constexpr std::string_view ctx = "classifier config";
  ClassifierConfig c;
  c.classes = io::get_int(j, "classes", ctx);
  c.window = io::get_int(j, "window", ctx);
  c.height = io::get_int(j, "height", ctx);
  c.width = io::get_int(j, "width", ctx);
  c.channels = io::get_int(j, "channels", ctx);
  const Shape ch = io::get_shape(j, "conv_channels", ctx);
  c.conv_channels.assign(ch.begin(), ch.end());
  c.fc_width = io::get_int(j, "fc_width", ctx);
  c.seed = io::field(j, "seed", ctx).get<std::uint64_t>();
  c.clamp_input = io::get_bool(j, "clamp_input", ctx);
  return c;
}

int ScoreVector::argmax() const {
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

ClassifierNet::ClassifierNet(ClassifierConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  body_.add<nn::PixelRescale>(cfg_.clamp_input);
  int in_c = cfg_.channels;
  Dims3 dims{cfg_.window, cfg_.height, cfg_.width};
  for (std::size_t s = 0; s < cfg_.conv_channels.size(); ++s) {
    const int out_c = cfg_.conv_channels[s];
    body_.add<nn::Conv3d>("conv" + std::to_string(s + 1), in_c, out_c, Dims3{3, 3, 3}, Dims3{1, 1, 1}, Dims3{1, 1, 1}, rng);
    body_.add<nn::ReLU>();
    const Dims3 pool = s == 0 ? Dims3{1, 2, 2} : Dims3{2, 2, 2};
    body_.add<nn::MaxPool3d>(pool);
    dims = {dims.t / pool.t, dims.h / pool.h, dims.w / pool.w};
    in_c = out_c;
  }
  const int flat = in_c * dims.t * dims.h * dims.w;
  body_.add<nn::Linear>("fc1", flat, cfg_.fc_width, rng);
  body_.add<nn::ReLU>();
  body_.add<nn::Linear>("fc2", cfg_.fc_width, cfg_.classes, rng);
}

Tensor ClassifierNet::to_network_layout(const Tensor& batch) const {
  const Shape want{cfg_.window, cfg_.height, cfg_.width, cfg_.channels};
  if (batch.rank() != 5 || Shape(batch.shape().begin() + 1, batch.shape().end()) != want) {
    throw ShapeError("classifier: expected batch [N, " + std::to_string(cfg_.window) + ", " + std::to_string(cfg_.height) +
                     ", " + std::to_string(cfg_.width) + ", " + std::to_string(cfg_.channels) + "], got " +
                     shape_str(batch.shape()));
  }
  const int n = batch.dim(0), T = cfg_.window, H = cfg_.height, W = cfg_.width, C = cfg_.channels;
  Tensor out({n, C, T, H, W});
  const std::size_t vol = static_cast<std::size_t>(T) * H * W;
  for (int b = 0; b < n; ++b) {
    const float* src = batch.slice(b).data();
    float* dst = out.slice(b).data();
    for (std::size_t p = 0; p < vol; ++p) {
      for (int c = 0; c < C; ++c) dst[static_cast<std::size_t>(c) * vol + p] = src[p * C + static_cast<std::size_t>(c)];
    }
  }
  return out;
}

Tensor ClassifierNet::logits(const Tensor& batch) const {
  return body_.forward(to_network_layout(batch), nn::Mode::Inference, nullptr);
}

Tensor ClassifierNet::scores(const Tensor& batch) const { return nn::softmax(logits(batch)); }

Tensor ClassifierNet::forward_logits(const Tensor& batch, nn::Tape& tape, nn::Mode mode) const {
  return body_.forward(to_network_layout(batch), mode, &tape);
}

Tensor ClassifierNet::backward_input(const Tensor& dlogits, const nn::Tape& tape) const {
  const Tensor dx = body_.backward(dlogits, tape, nullptr, true);
  const int n = dx.dim(0), C = dx.dim(1), T = dx.dim(2), H = dx.dim(3), W = dx.dim(4);
  Tensor out({n, T, H, W, C});
  const std::size_t vol = static_cast<std::size_t>(T) * H * W;
  for (int b = 0; b < n; ++b) {
    const float* src = dx.slice(b).data();
    float* dst = out.slice(b).data();
    for (std::size_t p = 0; p < vol; ++p) {
      for (int c = 0; c < C; ++c) dst[p * C + static_cast<std::size_t>(c)] = src[static_cast<std::size_t>(c) * vol + p];
    }
  }
  return out;
}

void ClassifierNet::backward_params(const Tensor& dlogits, const nn::Tape& tape, std::vector<Tensor>& grads) const {
  body_.backward(dlogits, tape, &grads, false);
}

std::uint64_t ClassifierNet::parameter_hash() const {
  auto ps = body_.params();
  return nn::parameter_hash(ps);
}

ClassifierNet build_classifier(const ClassifierConfig& cfg) { return ClassifierNet(cfg); }

Tensor stack_clips(const std::vector<const Tensor*>& clips) {
  if (clips.empty()) throw ShapeError("stack_clips: no clips");
  const Shape& s = clips.front()->shape();
  Shape shape{static_cast<int>(clips.size())};
  shape.insert(shape.end(), s.begin(), s.end());
  std::vector<float> v;
  v.reserve(shape_size(shape));
  for (const Tensor* c : clips) {
    if (c->shape() != s) throw ShapeError("stack_clips: clip shape " + shape_str(c->shape()) + " differs from " + shape_str(s));
    v.insert(v.end(), c->values().begin(), c->values().end());
  }
  return Tensor(std::move(shape), std::move(v));
}

ScoreVector classify(const ClassifierNet& net, const Tensor& clip) {
  if (clip.shape() != net.config().clip_shape()) {
    throw ShapeError("classify: clip shape " + shape_str(clip.shape()) + " does not match " +
                     shape_str(net.config().clip_shape()));
  }
  const Tensor s = net.scores(stack_clips({&clip}));
  return {std::vector<float>(s.values().begin(), s.values().end())};
}

double cross_entropy_grad(const Tensor& logits, const std::vector<int>& labels, Tensor& dlogits) {
  const int n = logits.dim(0), k = logits.dim(1);
  dlogits = Tensor(logits.shape());
  double loss = 0.0;
  std::vector<double> q(static_cast<std::size_t>(k));
  for (int b = 0; b < n; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    const float* l = logits.data() + static_cast<std::size_t>(b) * k;
    const double m = *std::max_element(l, l + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += (q[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(l[j]) - m));
    // 1 - q_y is summed from the other classes so a saturated softmax still
    // yields a usable gradient.
    double rest = 0.0;
    for (int j = 0; j < k; ++j) {
      q[static_cast<std::size_t>(j)] /= z;
      if (j != y) {
        rest += q[static_cast<std::size_t>(j)];
        dlogits[static_cast<std::size_t>(b) * k + j] = static_cast<float>(q[static_cast<std::size_t>(j)] / n);
      }
    }
    dlogits[static_cast<std::size_t>(b) * k + y] = static_cast<float>(-rest / n);
    loss += std::log(z) + m - l[y];
  }
  return loss / n;
}

ClassifierTrainReport train_classifier(ClassifierNet& net, const ClipDataset& data, int epochs, float lr,
                                       std::uint64_t seed, const ClassifierTrainOptions& opts) {
  if (data.clips.empty()) throw ConfigError("train_classifier: training split is empty");
  if (epochs < 1 || opts.batch < 1 || !(lr > 0.0f)) throw ConfigError("train_classifier: epochs, batch, lr must be positive");
  nn::Adam adam(net.body().params());
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.clips.size());
  std::iota(order.begin(), order.end(), 0);
  ClassifierTrainReport report;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t seen = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch));
      std::vector<const Tensor*> clips;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        clips.push_back(&data.clips[order[i]].frames);
        labels.push_back(data.clips[order[i]].label);
      }
      nn::Tape tape;
      const Tensor logits = net.forward_logits(stack_clips(clips), tape, nn::Mode::Training);
      Tensor dlogits;
      const double loss = cross_entropy_grad(logits, labels, dlogits);
      if (!std::isfinite(loss)) {
        throw NumericalError("train_classifier: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                             std::to_string(start));
      }
      for (std::size_t b = 0; b < labels.size(); ++b) {
        const float* row = logits.data() + b * static_cast<std::size_t>(logits.dim(1));
        if (std::max_element(row, row + logits.dim(1)) - row == labels[b]) ++correct;
      }
      auto grads = net.body().zero_grads();
      net.backward_params(dlogits, tape, grads);
      adam.step(grads, lr);
      total += loss * static_cast<double>(labels.size());
      seen += labels.size();
    }
    report.epoch_loss.push_back(total / static_cast<double>(seen));
    report.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    if (opts.verbose) {
      std::fprintf(stderr, "epoch %d loss %.4f train-acc %.3f\n", epoch + 1, report.epoch_loss.back(), report.train_accuracy);
    }
  }
  return report;
}

std::vector<int> predict(const ClassifierNet& net, const std::vector<const Tensor*>& clips, int chunk) {
  std::vector<int> out;
  out.reserve(clips.size());
  for (std::size_t start = 0; start < clips.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(clips.size(), start + static_cast<std::size_t>(chunk));
    const std::vector<const Tensor*> part(clips.begin() + static_cast<std::ptrdiff_t>(start),
                                          clips.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor logits = net.logits(stack_clips(part));
    const int k = logits.dim(1);
    for (std::size_t b = 0; b < part.size(); ++b) {
      const float* row = logits.data() + b * static_cast<std::size_t>(k);
      out.push_back(static_cast<int>(std::max_element(row, row + k) - row));
    }
  }
  return out;
}

double accuracy(const ClassifierNet& net, const ClipDataset& data) {
  if (data.clips.empty()) return 0.0;
  std::vector<const Tensor*> clips;
  for (const auto& c : data.clips) clips.push_back(&c.frames);
  const auto pred = predict(net, clips);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.clips[i].label;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

void save_classifier(const std::filesystem::path& dir, const ClassifierNet& net, const io::Json& extra) {
  save_network(dir, "classifier", to_json(net.config()), extra, net.body());
}

ClassifierNet load_classifier(const std::filesystem::path& dir) {
  const io::Json meta = read_checkpoint_meta(dir, "classifier");
  ClassifierNet net(classifier_config_from_json(meta["config"]));
  load_network_tensors(dir, meta, net.body());
  return net;
}

}  // namespace vidup
