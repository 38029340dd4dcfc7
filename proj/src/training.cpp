#include "vidup/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vidup/errors.hpp"
#include "vidup/seeding.hpp"

namespace vidup {

void TrainSchedule::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("schedule: lr0 must be > 0");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw ConfigError("schedule: decay_rate must lie in (0, 1]");
  if (decay_step < 1) throw ConfigError("schedule: decay_step must be >= 1");
  if (steps < 0) throw ConfigError("schedule: steps must be >= 0");
}

io::Json to_json(const TrainSchedule& s) {
  return {{"lr0", s.lr0}, {"decay_step", s.decay_step}, {"decay_rate", s.decay_rate}, {"steps", s.steps},
          {"seed", s.seed}};
}

TrainSchedule schedule_from_json(const io::Json& j) {
  constexpr std::string_view ctx = "schedule";
  TrainSchedule s;
  s.lr0 = io::get_number(j, "lr0", ctx);
  s.decay_step = io::get_int(j, "decay_step", ctx);
  s.decay_rate = io::get_number(j, "decay_rate", ctx);
  s.steps = io::get_int(j, "steps", ctx);
  s.seed = io::field(j, "seed", ctx).get<std::uint64_t>();
  s.validate();
  return s;
}

double lr_at(const TrainSchedule& s, int step) {
  if (step < 0) throw ConfigError("lr_at: step must be >= 0");
  return s.lr0 * std::pow(s.decay_rate, static_cast<double>(step) / s.decay_step);
}

io::Json to_json(const GeneratorTrainOptions& o) {
  return {{"noise_batch", o.noise_batch},
          {"fixed_noise", o.fixed_noise},
          {"recalibration_batches", o.recalibration_batches},
          {"adam", {{"beta1", nn::AdamConfig{}.beta1}, {"beta2", nn::AdamConfig{}.beta2}, {"eps", nn::AdamConfig{}.eps}}}};
}

GeneratorTrainResult train_generator(GeneratorNet& gen, const ClassifierNet& classifier, BalancedBatcher& batcher,
                                     AttackKind kind, const LossConfig& cfg, const TrainSchedule& sched,
                                     const GeneratorTrainOptions& opts) {
  cfg.validate();
  sched.validate();
  if (opts.noise_batch < 1) throw ConfigError("train_generator: noise_batch must be >= 1");
  if (gen.mode() != attack_generator_mode(kind)) {
    throw ConfigError("train_generator: attack " + std::string(attack_name(kind)) + " needs a " +
                      std::string(mode_name(attack_generator_mode(kind))) + " generator");
  }
  const ClassifierConfig& cc = classifier.config();
  const GeneratorConfig& gc = gen.config();
  if (gc.height != cc.height || gc.width != cc.width || gc.channels != cc.channels ||
      (gc.mode == GeneratorMode::Clip3d && gc.window != cc.window)) {
    throw ShapeError("train_generator: generator output does not match classifier clips");
  }

  const auto t0 = std::chrono::steady_clock::now();
  GeneratorTrainResult result;
  result.classifier_hash = classifier.parameter_hash();
  std::mt19937_64 noise_rng(derive_seed(sched.seed, 11));
  std::mt19937_64 offset_rng(derive_seed(sched.seed, 12));
  const int w = cc.window;
  const Tensor fixed_z = sample_noise_batch(opts.noise_batch, gc.noise_dim, noise_rng);

  nn::Adam adam(gen.body().params());
  std::vector<Tensor> last_good;
  for (int step = 0; step < sched.steps; ++step) {
    last_good.clear();
    for (const nn::Param* p : std::as_const(gen.body()).params()) last_good.push_back(p->value);

    auto [targets, nontargets] = batcher.next_batch();
    const Tensor z = opts.fixed_noise || step == 0 ? fixed_z : sample_noise_batch(opts.noise_batch, gc.noise_dim, noise_rng);
    nn::Tape tape;
    Tensor out = gen.forward(z, nn::Mode::Training, &tape);
    Tensor clips = out;
    if (gen.mode() == GeneratorMode::Frame2d) {
      clips = Tensor({opts.noise_batch, w, gc.height, gc.width, gc.channels});
      for (int b = 0; b < opts.noise_batch; ++b) {
        const auto f = out.slice(b);
        float* dst = clips.slice(b).data();
        for (int i = 0; i < w; ++i) std::copy(f.begin(), f.end(), dst + static_cast<std::size_t>(i) * f.size());
      }
    }
    const std::vector<int> offsets =
        kind == AttackKind::Cdup ? objective_offsets(cfg.offset_strategy, w, offset_rng) : std::vector<int>{0};
    ObjectiveValue obj = batch_objective(classifier, kind, targets, nontargets, clips, offsets, cfg, true);
    if (!std::isfinite(obj.loss) || !all_finite(obj.grad.values())) {
      auto params = gen.body().params();
      for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = last_good[i];
      throw NumericalError("train_generator: non-finite loss at step " + std::to_string(step) +
                           "; parameters restored to the previous step");
    }
    Tensor dout = std::move(obj.grad);
    if (gen.mode() == GeneratorMode::Frame2d) {
      Tensor df(out.shape());
      for (int b = 0; b < opts.noise_batch; ++b) {
        const auto g = dout.slice(b);
        float* acc = df.slice(b).data();
        const std::size_t frame = df.slice(b).size();
        for (int i = 0; i < w; ++i) {
          for (std::size_t e = 0; e < frame; ++e) acc[e] += g[static_cast<std::size_t>(i) * frame + e];
        }
      }
      dout = std::move(df);
    }
    std::vector<Tensor> grads = gen.body().zero_grads();
    gen.backward(dout, tape, grads);
    const double lr = lr_at(sched, step);
    adam.step(grads, static_cast<float>(lr));
    gen.body().commit_statistics(tape, 0.1f);
    result.history.loss.push_back(obj.loss);
    result.history.lr.push_back(lr);
    if (opts.progress && opts.progress_every > 0 && (step + 1) % opts.progress_every == 0) {
      opts.progress(step + 1, obj.loss, lr);
    }
  }
  if (opts.recalibration_batches > 0) {
    gen.recalibrate(opts.recalibration_batches, opts.noise_batch, derive_seed(sched.seed, 13));
  }
  if (classifier.parameter_hash() != result.classifier_hash) {
    throw Error("train_generator: classifier parameters changed during attack training");
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& h) {
  std::ostringstream os;
  os << "step,loss,lr\n" << std::setprecision(9);
  for (std::size_t i = 0; i < h.loss.size(); ++i) os << i << ',' << h.loss[i] << ',' << h.lr[i] << '\n';
  io::atomic_write(path, os.str());
}

ArtifactRef reference_artifact(const std::string& role, const std::filesystem::path& path) {
  io::require_exists(path);
  return {role, path, io::file_hash(path)};
}

io::Json to_json(const RunManifest& m) {
  io::Json arts = io::Json::array();
  for (const ArtifactRef& a : m.artifacts) arts.push_back({{"role", a.role}, {"path", a.path.string()}, {"hash", a.hash}});
  return {{"run_id", m.run_id},
          {"attack", attack_name(m.kind)},
          {"artifacts", arts},
          {"generator_config", m.generator_config},
          {"loss_config", m.loss_config},
          {"schedule", m.schedule},
          {"options", m.options},
          {"classifier_parameter_hash", m.classifier_parameter_hash},
          {"wall_seconds", m.wall_seconds},
          {"final_metrics", m.final_metrics}};
}

void verify_artifacts(const RunManifest& m) {
  for (const ArtifactRef& a : m.artifacts) io::require_exists(a.path);
}

}  // namespace vidup
