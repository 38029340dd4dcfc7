#include "vidup/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

#include "vidup/errors.hpp"
#include "vidup/figures.hpp"
#include "vidup/seeding.hpp"

namespace fs = std::filesystem;

namespace vidup {

using io::Json;

namespace {

constexpr AttackKind kAllKinds[] = {AttackKind::Up, AttackKind::Dup, AttackKind::Cdup, AttackKind::TwoDDup};

void require_object(const Json& j, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
}

void reject_unknown(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& ctx) {
  require_object(j, ctx);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
    }
  }
}

// User keys replace entries of the defaults document; keys the defaults do not
// have (or that are hidden from users) are rejected.
Json overlay(Json defaults, const Json& user, const std::string& ctx, std::initializer_list<std::string_view> hidden) {
  require_object(user, ctx);
  for (auto it = user.begin(); it != user.end(); ++it) {
    const bool is_hidden = std::find(hidden.begin(), hidden.end(), it.key()) != hidden.end();
    if (is_hidden || !defaults.contains(it.key())) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
    defaults[it.key()] = it.value();
  }
  return defaults;
}

Json strip(Json j, std::initializer_list<std::string_view> keys) {
  for (auto k : keys) j.erase(std::string(k));
  return j;
}

const Json& section(const Json& j, std::string_view key) {
  static const Json empty = Json::object();
  return j.contains(key) ? j.at(std::string(key)) : empty;
}

int opt_int(const Json& j, std::string_view key, int def, const std::string& ctx) {
  return j.contains(key) ? io::get_int(j, key, ctx) : def;
}
double opt_number(const Json& j, std::string_view key, double def, const std::string& ctx) {
  return j.contains(key) ? io::get_number(j, key, ctx) : def;
}
bool opt_bool(const Json& j, std::string_view key, bool def, const std::string& ctx) {
  return j.contains(key) ? io::get_bool(j, key, ctx) : def;
}

std::vector<int> int_list(const Json& j, std::string_view key, const std::string& ctx) {
  const Json& v = io::field(j, key, ctx);
  if (!v.is_array()) throw ConfigError(ctx + ": field '" + std::string(key) + "' must be an array of integers");
  std::vector<int> out;
  for (const Json& e : v) {
    if (!e.is_number_integer()) {
      throw ConfigError(ctx + ": field '" + std::string(key) + "' must be an array of integers");
    }
    out.push_back(e.get<int>());
  }
  return out;
}

std::set<int> parse_targets(const Json& j, int classes, const std::string& ctx) {
  const Json& v = io::field(j, "targets", ctx);
  if (!v.is_array()) throw ConfigError(ctx + ": field 'targets' must be an array of class ids or names");
  const auto names = synthetic_class_names(classes);
  std::set<int> out;
  for (const Json& e : v) {
    if (e.is_number_integer()) {
      out.insert(e.get<int>());
    } else if (e.is_string()) {
      const int id = class_id(names, e.get<std::string>());
      if (id < 0) throw ConfigError(ctx + ": field 'targets' names unknown class '" + e.get<std::string>() + "'");
      out.insert(id);
    } else {
      throw ConfigError(ctx + ": field 'targets' must be an array of class ids or names");
    }
  }
  return out;
}

std::uint64_t get_seed(const Json& j, const std::string& ctx) {
  const Json& v = io::field(j, "seed", ctx);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError(ctx + ": field 'seed' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void say(const StageOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

// Creates dir, refusing to reuse a non-empty one unless forced.
void prepare_dir(const fs::path& dir, const StageOptions& opts) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!opts.force) throw Error(dir.string() + " already exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

std::vector<ArtifactRef> list_outputs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "run.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ArtifactRef> out;
  for (const auto& f : files) out.push_back(reference_artifact("output", f));
  return out;
}

Json refs_json(const std::vector<ArtifactRef>& refs) {
  Json a = Json::array();
  for (const auto& r : refs) a.push_back({{"role", r.role}, {"path", r.path.string()}, {"hash", r.hash}});
  return a;
}

void write_stage_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& c,
                          const std::vector<ArtifactRef>& inputs, const Json& metrics, double seconds) {
  Json j{{"command", command},
         {"config", to_json(c)},
         {"inputs", refs_json(inputs)},
         {"outputs", refs_json(list_outputs(dir))},
         {"wall_seconds", seconds},
         {"final_metrics", metrics}};
  io::write_json(dir / "run.json", j);
}

DatasetSplits load_checked_dataset(const ExperimentConfig& c) {
  const fs::path dir = stage_paths(c.output_dir).data;
  io::require_exists(dir / "manifest.json");
  DatasetSplits data = load_dataset(dir);
  if (!(data.train.config == c.synth_config())) {
    throw ConfigError("dataset in " + dir.string() + " was built from a different data config or seed; re-run data");
  }
  return data;
}

ClassifierNet load_checked_classifier(const ExperimentConfig& c) {
  const fs::path dir = stage_paths(c.output_dir).classifier;
  io::require_exists(dir / "meta.json");
  ClassifierNet net = load_classifier(dir);
  if (to_json(net.config()) != to_json(c.classifier_config())) {
    throw ConfigError("classifier in " + dir.string() + " was built from a different config; re-run train-classifier");
  }
  return net;
}

GeneratorNet load_checked_generator(const ExperimentConfig& c, AttackKind kind) {
  const fs::path dir = stage_paths(c.output_dir).attack(kind, c.attack.targets) / "generator";
  io::require_exists(dir / "meta.json");
  GeneratorNet gen = load_generator(dir);
  if (to_json(gen.config()) != to_json(c.generator_config(kind))) {
    throw ConfigError("generator in " + dir.string() + " was built from a different config; re-run train-attack");
  }
  return gen;
}

PerturbationClip evaluation_perturbation(const ExperimentConfig& c, const GeneratorNet& gen) {
  const NoiseVector z = sample_noise(gen.config().noise_dim, stage_seed(c, SeedSalt::EvalNoise));
  return as_clip(gen, generate(gen, z), c.data.window);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

SynthConfig ExperimentConfig::synth_config() const {
  SynthConfig s = data;
  s.seed = stage_seed(*this, SeedSalt::Data);
  return s;
}

ClassifierConfig ExperimentConfig::classifier_config() const {
  ClassifierConfig cc;
  cc.classes = data.classes;
  cc.window = data.window;
  cc.height = data.height;
  cc.width = data.width;
  cc.channels = data.channels;
  cc.conv_channels = classifier.conv_channels;
  cc.fc_width = classifier.fc_width;
  cc.clamp_input = classifier.clamp_input;
  cc.seed = stage_seed(*this, SeedSalt::ClassifierInit);
  return cc;
}

GeneratorConfig ExperimentConfig::generator_config(AttackKind kind) const {
  GeneratorConfig g = attack.generator;
  g.mode = attack_generator_mode(kind);
  g.window = data.window;
  g.height = data.height;
  g.width = data.width;
  g.channels = data.channels;
  g.seed = stage_seed(*this, SeedSalt::GeneratorInit);
  return g;
}

LossConfig ExperimentConfig::loss_config(AttackKind kind) const {
  LossConfig l = attack.loss;
  if (auto it = attack.lambda_by_kind.find(kind); it != attack.lambda_by_kind.end()) l.lambda = it->second;
  return l;
}

SlidingWindowConfig ExperimentConfig::window_config() const { return {data.window, eval.stride, eval.start}; }

TrainSchedule ExperimentConfig::schedule() const {
  TrainSchedule s = attack.schedule;
  s.seed = stage_seed(*this, SeedSalt::GeneratorTrain);
  return s;
}

void ExperimentConfig::validate() const {
  synth_config().validate();
  classifier_config().validate();
  if (classifier.epochs < 1) throw ConfigError("classifier: epochs must be >= 1");
  if (!(classifier.lr > 0.0)) throw ConfigError("classifier: lr must be > 0");
  if (classifier.batch < 1) throw ConfigError("classifier: batch must be >= 1");

  for (AttackKind k : kAllKinds) generator_config(k).validate();
  for (AttackKind k : kAllKinds) loss_config(k).validate();
  schedule().validate();
  if (attack.targets.empty()) throw ConfigError("attack: targets must not be empty");
  if (static_cast<int>(attack.targets.size()) >= data.classes) {
    throw ConfigError("attack: targets must leave at least one non-target class");
  }
  for (int t : attack.targets) {
    if (t < 0 || t >= data.classes) throw ConfigError("attack: target " + std::to_string(t) + " is not a class id");
  }
  if (attack.batch < 2 || attack.batch % 2) throw ConfigError("attack: batch must be even and >= 2");
  if (attack.undersample_factor < 1) throw ConfigError("attack: undersample_factor must be >= 1");
  if (attack.noise_batch < 1) throw ConfigError("attack: noise_batch must be >= 1");
  if (attack.recalibration_batches < 0) throw ConfigError("attack: recalibration_batches must be >= 0");

  window_config().validate();
  if (eval.segments_per_class < 1) throw ConfigError("eval: segments_per_class must be >= 1");
  if (eval.segment_length < data.window) throw ConfigError("eval: segment_length must be >= the window");
  if (eval.smooth_k < 1 || eval.smooth_k % 2 == 0) throw ConfigError("eval: smooth_k must be odd and >= 1");

  boundary.bim.validate();
  if (boundary.videos < 1) throw ConfigError("boundary: videos must be >= 1");
  if (boundary.anchors_per_video < 1) throw ConfigError("boundary: anchors_per_video must be >= 1");
  if (boundary.video_length < 2 * data.window) throw ConfigError("boundary: video_length must be >= 2 * window");
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  reject_unknown(j, {"seed", "output_dir", "data", "classifier", "attack", "eval", "boundary"}, "config");
  ExperimentConfig c;
  if (j.contains("seed")) c.seed = get_seed(j, "config");
  if (j.contains("output_dir")) c.output_dir = io::get_string(j, "output_dir", "config");

  {
    Json d = overlay(strip(to_json(SynthConfig{}), {"seed"}), section(j, "data"), "config.data", {});
    d["seed"] = 0;
    c.data = synth_config_from_json(d);
  }
  {
    const Json& s = section(j, "classifier");
    const std::string ctx = "config.classifier";
    reject_unknown(s, {"conv_channels", "fc_width", "clamp_input", "epochs", "lr", "batch"}, ctx);
    if (s.contains("conv_channels")) c.classifier.conv_channels = int_list(s, "conv_channels", ctx);
    c.classifier.fc_width = opt_int(s, "fc_width", c.classifier.fc_width, ctx);
    c.classifier.clamp_input = opt_bool(s, "clamp_input", c.classifier.clamp_input, ctx);
    c.classifier.epochs = opt_int(s, "epochs", c.classifier.epochs, ctx);
    c.classifier.lr = opt_number(s, "lr", c.classifier.lr, ctx);
    c.classifier.batch = opt_int(s, "batch", c.classifier.batch, ctx);
  }
  {
    const Json& s = section(j, "attack");
    const std::string ctx = "config.attack";
    reject_unknown(s,
                   {"targets", "generator", "loss", "lambda_by_kind", "schedule", "batch", "undersample_factor", "noise_batch",
                    "fixed_noise", "recalibration_batches"},
                   ctx);
    if (s.contains("targets")) c.attack.targets = parse_targets(s, c.data.classes, ctx);
    Json g = overlay(to_json(GeneratorConfig{}), section(s, "generator"), ctx + ".generator",
                     {"mode", "window", "height", "width", "channels", "seed"});
    c.attack.generator = generator_config_from_json(g);
    c.attack.loss = loss_config_from_json(overlay(to_json(LossConfig{}), section(s, "loss"), ctx + ".loss", {}));
    if (s.contains("lambda_by_kind")) {
      const Json& l = s.at("lambda_by_kind");
      require_object(l, ctx + ".lambda_by_kind");
      for (auto it = l.begin(); it != l.end(); ++it) {
        AttackKind k;
        try {
          k = parse_attack_kind(it.key());
        } catch (const ConfigError&) {
          throw ConfigError(ctx + ".lambda_by_kind: unknown key '" + it.key() + "'");
        }
        c.attack.lambda_by_kind[k] = io::get_number(l, it.key(), ctx + ".lambda_by_kind");
      }
    }
    c.attack.schedule =
        schedule_from_json(overlay(to_json(TrainSchedule{}), section(s, "schedule"), ctx + ".schedule", {"seed"}));
    c.attack.batch = opt_int(s, "batch", c.attack.batch, ctx);
    c.attack.undersample_factor = opt_int(s, "undersample_factor", c.attack.undersample_factor, ctx);
    c.attack.noise_batch = opt_int(s, "noise_batch", c.attack.noise_batch, ctx);
    c.attack.fixed_noise = opt_bool(s, "fixed_noise", c.attack.fixed_noise, ctx);
    c.attack.recalibration_batches = opt_int(s, "recalibration_batches", c.attack.recalibration_batches, ctx);
  }
  {
    const Json& s = section(j, "eval");
    const std::string ctx = "config.eval";
    reject_unknown(s, {"stride", "start", "segments_per_class", "segment_length", "smooth_k"}, ctx);
    c.eval.stride = opt_int(s, "stride", c.eval.stride, ctx);
    c.eval.start = opt_int(s, "start", c.eval.start, ctx);
    c.eval.segments_per_class = opt_int(s, "segments_per_class", c.eval.segments_per_class, ctx);
    c.eval.segment_length = opt_int(s, "segment_length", c.eval.segment_length, ctx);
    c.eval.smooth_k = opt_int(s, "smooth_k", c.eval.smooth_k, ctx);
  }
  {
    const Json& s = section(j, "boundary");
    const std::string ctx = "config.boundary";
    reject_unknown(s, {"bim", "videos", "video_length", "anchors_per_video"}, ctx);
    c.boundary.bim = bim_config_from_json(overlay(to_json(BimConfig{}), section(s, "bim"), ctx + ".bim", {}));
    c.boundary.videos = opt_int(s, "videos", c.boundary.videos, ctx);
    c.boundary.video_length = opt_int(s, "video_length", c.boundary.video_length, ctx);
    c.boundary.anchors_per_video = opt_int(s, "anchors_per_video", c.boundary.anchors_per_video, ctx);
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  io::require_exists(path);
  Json j;
  try {
    j = Json::parse(io::read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

Json to_json(const ExperimentConfig& c) {
  Json targets = Json::array();
  for (int t : c.attack.targets) targets.push_back(t);
  Json lambdas = Json::object();
  for (const auto& [k, v] : c.attack.lambda_by_kind) lambdas[std::string(attack_name(k))] = v;
  return {{"seed", c.seed},
          {"output_dir", c.output_dir.string()},
          {"data", strip(to_json(c.data), {"seed"})},
          {"classifier",
           {{"conv_channels", c.classifier.conv_channels},
            {"fc_width", c.classifier.fc_width},
            {"clamp_input", c.classifier.clamp_input},
            {"epochs", c.classifier.epochs},
            {"lr", c.classifier.lr},
            {"batch", c.classifier.batch}}},
          {"attack",
           {{"targets", targets},
            {"generator", strip(to_json(c.attack.generator), {"mode", "window", "height", "width", "channels", "seed"})},
            {"loss", to_json(c.attack.loss)},
            {"lambda_by_kind", lambdas},
            {"schedule", strip(to_json(c.attack.schedule), {"seed"})},
            {"batch", c.attack.batch},
            {"undersample_factor", c.attack.undersample_factor},
            {"noise_batch", c.attack.noise_batch},
            {"fixed_noise", c.attack.fixed_noise},
            {"recalibration_batches", c.attack.recalibration_batches}}},
          {"eval",
           {{"stride", c.eval.stride},
            {"start", c.eval.start},
            {"segments_per_class", c.eval.segments_per_class},
            {"segment_length", c.eval.segment_length},
            {"smooth_k", c.eval.smooth_k}}},
          {"boundary",
           {{"bim", to_json(c.boundary.bim)},
            {"videos", c.boundary.videos},
            {"video_length", c.boundary.video_length},
            {"anchors_per_video", c.boundary.anchors_per_video}}}};
}

std::uint64_t stage_seed(const ExperimentConfig& c, SeedSalt salt) {
  return derive_seed(c.seed, static_cast<std::uint64_t>(salt));
}

std::string run_name(AttackKind kind, const std::set<int>& targets) {
  std::string s(attack_name(kind));
  char sep = '_';
  for (int t : targets) {
    s += sep;
    s += std::to_string(t);
    sep = '-';
  }
  return s;
}

StagePaths stage_paths(const fs::path& output_dir) {
  return {output_dir / "data", output_dir / "classifier", output_dir / "boundary"};
}

fs::path StagePaths::attack(AttackKind kind, const std::set<int>& targets) const {
  return data.parent_path() / "attacks" / run_name(kind, targets);
}
fs::path StagePaths::eval(AttackKind kind, const std::set<int>& targets) const {
  return data.parent_path() / "eval" / run_name(kind, targets);
}
fs::path StagePaths::render(AttackKind kind, const std::set<int>& targets) const {
  return data.parent_path() / "render" / run_name(kind, targets);
}

// ---------------------------------------------------------------------------
// Stages

DataResult run_data(const ExperimentConfig& c, const StageOptions& opts) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = stage_paths(c.output_dir).data;
  prepare_dir(dir, opts);
  const DatasetSplits data = make_synthetic_dataset(c.synth_config());
  save_dataset(dir, data);
  say(opts, "data: " + std::to_string(data.train.size()) + " train / " + std::to_string(data.test.size()) +
                " test clips");

  // Evaluation stream: every class segments_per_class times, in shuffled order.
  std::vector<int> sequence;
  for (int k = 0; k < c.data.classes; ++k) {
    for (int r = 0; r < c.eval.segments_per_class; ++r) sequence.push_back(k);
  }
  std::mt19937_64 rng(stage_seed(c, SeedSalt::EvalStream));
  std::shuffle(sequence.begin(), sequence.end(), rng);
  const LabeledStream stream =
      compose_stream(data.test, sequence, stage_seed(c, SeedSalt::EvalStream), c.eval.segment_length);
  save_stream(dir, stream, "eval_stream");

  for (int v = 0; v < c.boundary.videos; ++v) {
    const LabeledStream video = compose_stream(data.test, {v % c.data.classes},
                                               derive_seed(stage_seed(c, SeedSalt::BoundaryVideos), v),
                                               c.boundary.video_length);
    save_stream(dir, video, "boundary_video_" + std::to_string(v));
  }
  write_stage_manifest(dir, "data", c, {}, {{"eval_stream_frames", stream.num_frames()}}, seconds_since(t0));
  return {dir};
}

ClassifierResult run_train_classifier(const ExperimentConfig& c, const StageOptions& opts) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const StagePaths paths = stage_paths(c.output_dir);
  const DatasetSplits data = load_checked_dataset(c);
  prepare_dir(paths.classifier, opts);

  ClassifierNet net = build_classifier(c.classifier_config());
  ClassifierTrainOptions topts;
  topts.batch = c.classifier.batch;
  const ClassifierTrainReport rep = train_classifier(net, data.train, c.classifier.epochs,
                                                     static_cast<float>(c.classifier.lr),
                                                     stage_seed(c, SeedSalt::ClassifierTrain), topts);
  for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "classifier: epoch %zu loss %.4f", e + 1, rep.epoch_loss[e]);
    say(opts, buf);
  }
  ClassifierResult res;
  res.dir = paths.classifier;
  res.test_accuracy = accuracy(net, data.test);
  res.epoch_loss = rep.epoch_loss;
  const Json metrics{{"test_accuracy", res.test_accuracy},
                     {"train_accuracy", rep.train_accuracy},
                     {"epoch_loss", rep.epoch_loss}};
  save_classifier(paths.classifier, net,
                  {{"epochs", c.classifier.epochs},
                   {"lr", c.classifier.lr},
                   {"batch", c.classifier.batch},
                   {"train_seed", stage_seed(c, SeedSalt::ClassifierTrain)},
                   {"metrics", metrics}});
  say(opts, "classifier: test accuracy " + std::to_string(res.test_accuracy));
  write_stage_manifest(paths.classifier, "train-classifier", c,
                       {reference_artifact("dataset", paths.data / "manifest.json")}, metrics, seconds_since(t0));
  return res;
}

AttackResult run_train_attack(const ExperimentConfig& c, AttackKind kind, const StageOptions& opts) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const StagePaths paths = stage_paths(c.output_dir);
  const DatasetSplits data = load_checked_dataset(c);
  const ClassifierNet net = load_checked_classifier(c);
  const fs::path dir = paths.attack(kind, c.attack.targets);
  prepare_dir(dir, opts);

  auto [target_pool, nontarget_pool] = split_target(data.train, c.attack.targets);
  BalancedBatcher batcher(std::move(target_pool), std::move(nontarget_pool), c.attack.undersample_factor,
                          c.attack.batch, stage_seed(c, SeedSalt::Batcher));
  GeneratorNet gen = build_generator(c.generator_config(kind));
  GeneratorTrainOptions gopts;
  gopts.noise_batch = c.attack.noise_batch;
  gopts.fixed_noise = c.attack.fixed_noise;
  gopts.recalibration_batches = c.attack.recalibration_batches;
  if (opts.log) {
    gopts.progress_every = 100;
    gopts.progress = [&](int step, double loss, double lr) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%s: step %d loss %.4f lr %.6f", run_name(kind, c.attack.targets).c_str(), step,
                    loss, lr);
      opts.log(buf);
    };
  }
  const TrainSchedule sched = c.schedule();
  const GeneratorTrainResult r = train_generator(gen, net, batcher, kind, c.loss_config(kind), sched, gopts);

  save_generator(dir / "generator", gen,
                 {{"attack", attack_name(kind)}, {"targets", std::vector<int>(c.attack.targets.begin(), c.attack.targets.end())}});
  write_history_csv(dir / "history.csv", r.history);

  RunManifest m;
  m.run_id = run_name(kind, c.attack.targets);
  m.kind = kind;
  m.artifacts = {reference_artifact("dataset", paths.data / "manifest.json"),
                 reference_artifact("classifier", paths.classifier / "meta.json"),
                 reference_artifact("classifier_tensors", paths.classifier / "tensors.bin")};
  m.generator_config = to_json(gen.config());
  m.loss_config = to_json(c.loss_config(kind));
  m.schedule = to_json(sched);
  m.options = to_json(gopts);
  m.options["batch"] = c.attack.batch;
  m.options["undersample_factor"] = c.attack.undersample_factor;
  m.classifier_parameter_hash = io::hex64(r.classifier_hash);
  m.wall_seconds = seconds_since(t0);
  m.final_metrics = {{"final_loss", r.history.loss.empty() ? 0.0 : r.history.loss.back()},
                     {"steps", r.history.loss.size()}};
  Json j = to_json(m);
  j["command"] = "train-attack";
  j["config"] = to_json(c);
  j["outputs"] = refs_json(list_outputs(dir));
  io::write_json(dir / "run.json", j);
  return {dir, r.history};
}

EvalResult run_eval(const ExperimentConfig& c, AttackKind kind, const StageOptions& opts) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const StagePaths paths = stage_paths(c.output_dir);
  const DatasetSplits data = load_checked_dataset(c);
  const ClassifierNet net = load_checked_classifier(c);
  const GeneratorNet gen = load_checked_generator(c, kind);
  const LabeledStream stream = load_stream(paths.data, "eval_stream");
  const fs::path dir = paths.eval(kind, c.attack.targets);
  prepare_dir(dir, opts);

  const PerturbationClip p = evaluation_perturbation(c, gen);
  EvalResult res;
  res.dir = dir;
  res.kind = kind;
  res.stream = evaluate_stream(net, stream, p, c.attack.targets, c.window_config());
  res.clips = evaluate_clips(net, data.test, p, c.attack.targets);

  write_rates_csv(dir / "stream_rates.csv", res.stream.all);
  write_rates_csv(dir / "stream_interior_rates.csv", res.stream.interior);
  write_rates_csv(dir / "clip_rates.csv", res.clips.rates);
  write_score_curves_csv(dir / "score_curves_clean.csv",
                         score_curves(net, stream, c.window_config(), c.eval.smooth_k), data.train.class_names);
  write_score_curves_csv(dir / "score_curves_attacked.csv",
                         score_curves(net, inject(stream, p, c.eval.start % c.data.window), c.window_config(),
                                      c.eval.smooth_k),
                         data.train.class_names);
  const Json report{{"attack", attack_name(kind)}, {"stream", to_json(res.stream)}, {"clips", to_json(res.clips)}};
  io::write_json(dir / "report.json", report);
  fig::write_png(dir / "stream_rates.png", fig::line_plot({res.stream.all.target, res.stream.all.nontarget}, 0.0, 1.0));
  fig::write_png(dir / "perturbation.png", fig::perturbation_strip(p, gen.xi()));

  say(opts, format_offset_table(res.stream, res.clips));
  write_stage_manifest(dir, "eval", c,
                       {reference_artifact("eval_stream", paths.data / "eval_stream.json"),
                        reference_artifact("classifier", paths.classifier / "meta.json"),
                        reference_artifact("generator", paths.attack(kind, c.attack.targets) / "generator" / "meta.json")},
                       {{"stream_target_mean", res.stream.all.target_mean},
                        {"stream_nontarget_mean", res.stream.all.nontarget_mean},
                        {"clip_target_mean", res.clips.rates.target_mean},
                        {"clip_nontarget_mean", res.clips.rates.nontarget_mean}},
                       seconds_since(t0));
  return res;
}

BoundaryResult run_boundary(const ExperimentConfig& c, const StageOptions& opts) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const StagePaths paths = stage_paths(c.output_dir);
  const DatasetSplits data = load_checked_dataset(c);
  const ClassifierNet net = load_checked_classifier(c);
  std::vector<LabeledStream> videos;
  std::vector<ArtifactRef> inputs{reference_artifact("classifier", paths.classifier / "meta.json")};
  for (int v = 0; v < c.boundary.videos; ++v) {
    const std::string name = "boundary_video_" + std::to_string(v);
    videos.push_back(load_stream(paths.data, name));
    inputs.push_back(reference_artifact(name, paths.data / (name + ".json")));
  }
  prepare_dir(paths.boundary, opts);

  BoundaryResult res;
  res.dir = paths.boundary;
  const auto samples = staggered_samples(net, videos, c.boundary.anchors_per_video,
                                         stage_seed(c, SeedSalt::BoundaryAnchors), c.boundary.bim);
  res.correlation = correlation_matrix(samples);
  res.magnitude = magnitude_profile(samples);
  say(opts, "boundary: " + std::to_string(samples.size()) + " staggered samples");

  // Per-clip attacks on every test clip, each read back at every offset.
  std::vector<PerturbationClip> per_clip;
  per_clip.reserve(data.test.size());
  for (const VideoClip& clip : data.test.clips) per_clip.push_back(bim_attack(net, clip, c.boundary.bim));
  res.mismatch = mismatch_curve(net, data.test.clips, per_clip);

  write_matrix_csv(paths.boundary / "correlation.csv", res.correlation);
  write_vector_csv(paths.boundary / "magnitude.csv", "mean_abs_perturbation", res.magnitude);
  write_vector_csv(paths.boundary / "mismatch.csv", "attack_success", res.mismatch);
  const int w = res.correlation.w;
  fig::write_png(paths.boundary / "correlation.png", fig::heatmap(res.correlation.m, w, w, -1.0, 1.0));
  fig::write_png(paths.boundary / "magnitude.png",
                 fig::line_plot({res.magnitude}, 0.0, std::max(1e-6, c.boundary.bim.eps)));
  fig::write_png(paths.boundary / "mismatch.png", fig::line_plot({res.mismatch}, 0.0, 1.0));

  const Json metrics{{"samples", res.correlation.n_samples},
                     {"mean_correlation_gap4", res.correlation.mean_at_distance(4)},
                     {"mismatch_o0", res.mismatch.front()},
                     {"mismatch_mid", res.mismatch[w / 2]},
                     {"mismatch_last", res.mismatch.back()}};
  write_stage_manifest(paths.boundary, "boundary", c, inputs, metrics, seconds_since(t0));
  return res;
}

fs::path run_render(const ExperimentConfig& c, AttackKind kind, const StageOptions& opts) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const StagePaths paths = stage_paths(c.output_dir);
  const GeneratorNet gen = load_checked_generator(c, kind);
  const fs::path dir = paths.render(kind, c.attack.targets);
  prepare_dir(dir, opts);
  const PerturbationClip p = evaluation_perturbation(c, gen);
  fig::write_png(dir / "strip.png", fig::perturbation_strip(p, gen.xi()));
  const int frames = gen.config().output_frames();
  for (int f = 0; f < frames; ++f) {
    const auto s = p.values.slice(f);
    PerturbationClip one{Tensor({1, p.values.dim(1), p.values.dim(2), p.values.dim(3)},
                                std::vector<float>(s.begin(), s.end()))};
    char name[32];
    std::snprintf(name, sizeof name, "frame_%02d.png", f);
    fig::write_png(dir / name, fig::perturbation_strip(one, gen.xi(), 8));
  }
  say(opts, "render: wrote " + dir.string());
  write_stage_manifest(dir, "render-perturbation", c,
                       {reference_artifact("generator", paths.attack(kind, c.attack.targets) / "generator" / "meta.json")},
                       {{"max_abs", max_abs(p.values.values())}}, seconds_since(t0));
  return dir;
}

std::vector<AttackKind> trained_attacks(const ExperimentConfig& c) {
  std::vector<AttackKind> out;
  const StagePaths paths = stage_paths(c.output_dir);
  for (AttackKind k : kAllKinds) {
    if (fs::exists(paths.attack(k, c.attack.targets) / "generator" / "meta.json")) out.push_back(k);
  }
  return out;
}

std::string format_offset_table(const StreamEvalReport& stream, const ClipEvalReport& clips) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%6s %14s %17s %12s %15s\n", "offset", "stream_target", "stream_nontarget",
                "clip_target", "clip_nontarget");
  os << buf;
  for (std::size_t o = 0; o < stream.all.target.size(); ++o) {
    std::snprintf(buf, sizeof buf, "%6zu %14.4f %17.4f %12.4f %15.4f\n", o, stream.all.target[o],
                  stream.all.nontarget[o], clips.rates.target[o], clips.rates.nontarget[o]);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%6s %14.4f %17.4f %12.4f %15.4f\n", "mean", stream.all.target_mean,
                stream.all.nontarget_mean, clips.rates.target_mean, clips.rates.nontarget_mean);
  os << buf;
  return os.str();
}

}  // namespace vidup
