#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "vidup/classifier.hpp"
#include "vidup/errors.hpp"

using namespace vidup;

namespace {

ClassifierConfig tiny_config() {
  ClassifierConfig c;
  c.classes = 4;
  c.window = 4;
  c.height = c.width = 8;
  c.channels = 2;
  c.conv_channels = {3, 4};
  c.fc_width = 6;
  c.seed = 3;
  return c;
}

Tensor random_clip(const Shape& s, std::uint64_t seed) {
  Tensor t(s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(20.0f, 235.0f);
  for (float& v : t.values()) v = d(rng);
  return t;
}

double sum(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("default classifier maps a batch of four clips to four score vectors") {
  ClassifierConfig c;
  const ClassifierNet net = build_classifier(c);
  std::vector<Tensor> clips;
  for (int i = 0; i < 4; ++i) clips.push_back(random_clip(c.clip_shape(), i));
  std::vector<const Tensor*> ptrs;
  for (const Tensor& t : clips) ptrs.push_back(&t);
  const Tensor s = net.scores(stack_clips(ptrs));
  CHECK(s.shape() == Shape{4, 8});
  for (int b = 0; b < 4; ++b) {
    double total = 0.0;
    for (int k = 0; k < 8; ++k) total += s[static_cast<std::size_t>(b) * 8 + k];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("initialization is deterministic per seed") {
  ClassifierConfig c = tiny_config();
  CHECK(build_classifier(c).parameter_hash() == build_classifier(c).parameter_hash());
  c.seed = 4;
  CHECK(build_classifier(c).parameter_hash() != build_classifier(tiny_config()).parameter_hash());
}

TEST_CASE("zero input gives finite normalized scores") {
  const ClassifierNet net = build_classifier(tiny_config());
  const ScoreVector s = classify(net, Tensor(tiny_config().clip_shape()));
  CHECK(all_finite(s.scores));
  CHECK(sum(s.scores) == doctest::Approx(1.0).epsilon(1e-5));
  for (float v : s.scores) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("classify is pure and rejects wrong shapes") {
  const ClassifierNet net = build_classifier(tiny_config());
  const Tensor x = random_clip(tiny_config().clip_shape(), 9);
  const ScoreVector a = classify(net, x), b = classify(net, x);
  CHECK(a.scores == b.scores);
  CHECK(a.argmax() == b.argmax());
  CHECK_THROWS_AS(classify(net, Tensor({4, 8, 8, 3})), ShapeError);
}

TEST_CASE("configuration errors") {
  ClassifierConfig c = tiny_config();
  c.height = 10;  // not divisible by 2^stages
  CHECK_THROWS_AS(build_classifier(c), ConfigError);
  c = tiny_config();
  c.conv_channels = {4};
  CHECK_THROWS_AS(build_classifier(c), ConfigError);
  c = tiny_config();
  c.fc_width = 2;
  CHECK_THROWS_AS(build_classifier(c), ConfigError);
  c = tiny_config();
  c.window = 3;
  CHECK_THROWS_AS(build_classifier(c), ConfigError);
}

TEST_CASE("input gradient matches central differences on a three voxel probe") {
  ClassifierConfig c = tiny_config();
  const ClassifierNet net = build_classifier(c);
  Tensor x({1, 4, 8, 8, 2});
  {
    const Tensor clip = random_clip(c.clip_shape(), 17);
    std::copy(clip.values().begin(), clip.values().end(), x.data());
  }
  const std::vector<int> label{2};
  auto loss = [&](const Tensor& in) {
    Tensor d;
    return cross_entropy_grad(net.logits(in), label, d);
  };
  nn::Tape tape;
  const Tensor logits = net.forward_logits(x, tape, nn::Mode::Inference);
  Tensor dl;
  cross_entropy_grad(logits, label, dl);
  const Tensor g = net.backward_input(dl, tape);
  REQUIRE(g.shape() == x.shape());
  for (std::size_t at : {std::size_t{5}, std::size_t{130}, std::size_t{411}}) {
    // The network is piecewise linear in pixels, so a wide step stays exact away from kinks
    // and keeps float rounding small relative to the difference.
    const float h = 2.0f;
    Tensor xp = x, xm = x;
    xp[at] += h;
    xm[at] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2.0 * h);
    CHECK(std::fabs(fd - g[at]) <= 1e-3 * std::max(std::fabs(fd), std::fabs(static_cast<double>(g[at]))));
  }
}

TEST_CASE("clamped inputs are read as valid pixels") {
  ClassifierConfig c = tiny_config();
  const ClassifierNet net = build_classifier(c);
  Tensor x = random_clip(c.clip_shape(), 2);
  Tensor over = x;
  over[0] = 300.0f;
  over[1] = -40.0f;
  Tensor clipped = x;
  clipped[0] = 255.0f;
  clipped[1] = 0.0f;
  CHECK(classify(net, over).scores == classify(net, clipped).scores);
  c.clamp_input = false;
  const ClassifierNet raw = build_classifier(c);
  CHECK(classify(raw, over).scores != classify(raw, clipped).scores);
}

TEST_CASE("training smoke run and determinism") {
  SynthConfig sc;
  sc.height = sc.width = 16;
  sc.window = 8;
  sc.classes = 4;
  sc.clips_per_class = 3;
  sc.test_clips_per_class = 1;
  const DatasetSplits d = make_synthetic_dataset(sc);
  ClassifierConfig c;
  c.classes = 4;
  c.window = 8;
  c.height = c.width = 16;
  c.conv_channels = {4, 8};
  c.fc_width = 8;
  ClipDataset ten = d.train;
  ten.clips.resize(10);
  ClassifierNet a = build_classifier(c), b = build_classifier(c);
  const ClassifierTrainReport ra = train_classifier(a, ten, 1, 0.002f, 5);
  train_classifier(b, ten, 1, 0.002f, 5);
  REQUIRE(ra.epoch_loss.size() == 1);
  CHECK(std::isfinite(ra.epoch_loss[0]));
  CHECK(a.parameter_hash() == b.parameter_hash());
  CHECK(a.parameter_hash() != build_classifier(c).parameter_hash());
  ClipDataset empty = ten;
  empty.clips.clear();
  CHECK_THROWS_AS(train_classifier(a, empty, 1, 0.002f, 5), ConfigError);
}

TEST_CASE("training loss decreases on the synthetic set") {
  SynthConfig sc;
  sc.height = sc.width = 16;
  sc.clips_per_class = 8;
  sc.test_clips_per_class = 1;
  const DatasetSplits d = make_synthetic_dataset(sc);
  ClassifierConfig c;
  c.height = c.width = 16;
  c.conv_channels = {8, 16, 32, 32};
  c.fc_width = 64;
  ClassifierNet net = build_classifier(c);
  const ClassifierTrainReport r = train_classifier(net, d.train, 4, 0.002f, 1);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
}

TEST_CASE("checkpoint round trip") {
  ClassifierNet net = build_classifier(tiny_config());
  const auto dir = std::filesystem::temp_directory_path() / "vidup_test_classifier_ckpt";
  std::filesystem::remove_all(dir);
  save_classifier(dir, net, {{"epochs", 0}});
  const ClassifierNet back = load_classifier(dir);
  CHECK(back.parameter_hash() == net.parameter_hash());
  const Tensor x = random_clip(tiny_config().clip_shape(), 4);
  CHECK(classify(back, x).scores == classify(net, x).scores);
  CHECK_THROWS_AS(load_classifier(dir / "nope"), MissingArtifactError);
  std::filesystem::remove_all(dir);
}
