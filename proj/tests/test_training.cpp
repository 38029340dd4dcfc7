#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "vidup/errors.hpp"
#include "vidup/training.hpp"

using namespace vidup;

namespace {

struct Fixture {
  DatasetSplits data;
  ClassifierNet classifier;
  GeneratorConfig gen;

  Fixture() : data(make_data()), classifier(make_classifier()) {
    gen.window = 16;
    gen.height = gen.width = 16;
    gen.channels = 3;
    gen.filters = {4, 4, 4, 4};
    gen.seed = 2;
  }

  static DatasetSplits make_data() {
    SynthConfig sc;
    sc.height = sc.width = 16;
    sc.classes = 4;
    sc.clips_per_class = 4;
    sc.test_clips_per_class = 1;
    return make_synthetic_dataset(sc);
  }

  static ClassifierNet make_classifier() {
    ClassifierConfig c;
    c.classes = 4;
    c.height = c.width = 16;
    c.conv_channels = {3, 4};
    c.fc_width = 6;
    return build_classifier(c);
  }

  BalancedBatcher batcher(std::uint64_t seed = 1) const {
    auto [t, s] = split_target(data.train, {1});
    return BalancedBatcher(t, s, 1, 4, seed);
  }
};

TrainSchedule short_schedule(int steps) {
  TrainSchedule s;
  s.steps = steps;
  s.seed = 6;
  return s;
}

GeneratorTrainOptions quick() {
  GeneratorTrainOptions o;
  o.noise_batch = 2;
  o.recalibration_batches = 2;
  return o;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  const TrainSchedule s;
  CHECK(lr_at(s, 0) == doctest::Approx(0.002).epsilon(1e-12));
  CHECK(lr_at(s, 2000) == doctest::Approx(0.0019).epsilon(1e-12));
  CHECK(lr_at(s, 4000) == doctest::Approx(0.001805).epsilon(1e-12));
  CHECK(lr_at(s, 1000) == doctest::Approx(0.002 * std::sqrt(0.95)).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(s, -1), ConfigError);
  TrainSchedule bad;
  bad.decay_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.decay_step = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.lr0 = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(schedule_from_json(to_json(s)).decay_step == 2000);
}

TEST_CASE("generator training records history and leaves the classifier untouched") {
  Fixture f;
  const std::uint64_t before = f.classifier.parameter_hash();
  for (AttackKind kind : {AttackKind::Up, AttackKind::Dup, AttackKind::Cdup, AttackKind::TwoDDup}) {
    GeneratorConfig gc = f.gen;
    gc.mode = attack_generator_mode(kind);
    GeneratorNet g = build_generator(gc);
    const std::uint64_t g0 = nn::parameter_hash(std::as_const(g.body()).params());
    BalancedBatcher b = f.batcher();
    const GeneratorTrainResult r = train_generator(g, f.classifier, b, kind, LossConfig{}, short_schedule(3), quick());
    CHECK(r.history.loss.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(std::isfinite(r.history.loss[i]));
      CHECK(r.history.lr[i] == lr_at(short_schedule(3), static_cast<int>(i)));
    }
    CHECK(r.classifier_hash == before);
    CHECK(nn::parameter_hash(std::as_const(g.body()).params()) != g0);
  }
  CHECK(f.classifier.parameter_hash() == before);
}

TEST_CASE("generator training is deterministic") {
  Fixture f;
  GeneratorConfig gc = f.gen;
  GeneratorNet a = build_generator(gc), b = build_generator(gc);
  BalancedBatcher ba = f.batcher(), bb = f.batcher();
  const auto ra = train_generator(a, f.classifier, ba, AttackKind::Cdup, LossConfig{}, short_schedule(4), quick());
  const auto rb = train_generator(b, f.classifier, bb, AttackKind::Cdup, LossConfig{}, short_schedule(4), quick());
  CHECK(ra.history.loss == rb.history.loss);
  const NoiseVector z = sample_noise(100, 1);
  CHECK(bitwise_equal(generate(a, z), generate(b, z)));

  GeneratorTrainOptions fixed = quick();
  fixed.fixed_noise = true;
  GeneratorNet c = build_generator(gc);
  BalancedBatcher bc = f.batcher();
  const auto rc = train_generator(c, f.classifier, bc, AttackKind::Cdup, LossConfig{}, short_schedule(4), fixed);
  CHECK(rc.history.loss[0] == ra.history.loss[0]);
  CHECK(rc.history.loss != ra.history.loss);
}

TEST_CASE("mode and shape mismatches are rejected") {
  Fixture f;
  GeneratorNet clip = build_generator(f.gen);
  BalancedBatcher b = f.batcher();
  CHECK_THROWS_AS(train_generator(clip, f.classifier, b, AttackKind::TwoDDup, {}, short_schedule(1), quick()),
                  ConfigError);
  GeneratorConfig small = f.gen;
  small.channels = 2;
  GeneratorNet wrong = build_generator(small);
  CHECK_THROWS_AS(train_generator(wrong, f.classifier, b, AttackKind::Dup, {}, short_schedule(1), quick()),
                  ShapeError);
}

TEST_CASE("non-finite loss restores the last good parameters") {
  Fixture f;
  f.classifier.body().params().front()->value[0] = std::numeric_limits<float>::quiet_NaN();
  GeneratorNet g = build_generator(f.gen);
  const std::uint64_t g0 = nn::parameter_hash(std::as_const(g.body()).params());
  BalancedBatcher b = f.batcher();
  CHECK_THROWS_AS(train_generator(g, f.classifier, b, AttackKind::Dup, {}, short_schedule(3), quick()), NumericalError);
  CHECK(nn::parameter_hash(std::as_const(g.body()).params()) == g0);
}

TEST_CASE("history csv and run manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "vidup_test_training";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  TrainHistory h{{1.5, 0.25}, {0.002, 0.001}};
  write_history_csv(dir / "history.csv", h);
  CHECK(io::read_file(dir / "history.csv") == "step,loss,lr\n0,1.5,0.002\n1,0.25,0.001\n");

  RunManifest m;
  m.run_id = "demo";
  m.kind = AttackKind::Cdup;
  m.artifacts.push_back(reference_artifact("history", dir / "history.csv"));
  CHECK(m.artifacts[0].hash == io::file_hash(dir / "history.csv"));
  const io::Json j = to_json(m);
  CHECK(j["attack"] == "cdup");
  CHECK(j["artifacts"][0]["role"] == "history");
  CHECK_NOTHROW(verify_artifacts(m));
  std::filesystem::remove(dir / "history.csv");
  CHECK_THROWS_AS(verify_artifacts(m), MissingArtifactError);
  CHECK_THROWS_AS(reference_artifact("x", dir / "absent"), MissingArtifactError);
  std::filesystem::remove_all(dir);
}
