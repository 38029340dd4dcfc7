#include "vidup/boundary.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "vidup/errors.hpp"
#include "vidup/kernels/kernels.hpp"
#include "vidup/seeding.hpp"
#include "vidup/streameval.hpp"

namespace vidup {

void BimConfig::validate() const {
  if (!(eps > 0.0)) throw ConfigError("bim: eps must be > 0");
  if (!(step > 0.0)) throw ConfigError("bim: step must be > 0");
  if (iters < 1) throw ConfigError("bim: iters must be >= 1");
}

io::Json to_json(const BimConfig& c) { return {{"eps", c.eps}, {"step", c.step}, {"iters", c.iters}}; }

BimConfig bim_config_from_json(const io::Json& j) {
  constexpr std::string_view ctx = "bim";
  BimConfig c{io::get_number(j, "eps", ctx), io::get_number(j, "step", ctx), io::get_int(j, "iters", ctx)};
  c.validate();
  return c;
}

PerturbationClip bim_attack(const ClassifierNet& classifier, const Tensor& clip, int label, const BimConfig& cfg) {
  cfg.validate();
  if (clip.shape() != classifier.config().clip_shape()) {
    throw ShapeError("bim_attack: clip " + shape_str(clip.shape()) + " does not match the classifier");
  }
  const auto& k = kernels::active();
  Tensor delta(clip.shape());
  Tensor x(Shape{1, clip.dim(0), clip.dim(1), clip.dim(2), clip.dim(3)});
  const std::size_t n = clip.size();
  for (int it = 0; it < cfg.iters; ++it) {
    k.add_clamp(n, clip.data(), delta.data(), x.data(), 0.0f, 255.0f);
    nn::Tape tape;
    const Tensor logits = classifier.forward_logits(x, tape, nn::Mode::Inference);
    Tensor dlogits;
    cross_entropy_grad(logits, {label}, dlogits);
    const Tensor g = classifier.backward_input(dlogits, tape);
    k.sign_step_clip(n, g.data(), static_cast<float>(cfg.step), static_cast<float>(cfg.eps), delta.data());
    // Keep x + delta a valid frame.
    for (std::size_t i = 0; i < n; ++i) delta[i] = std::clamp(delta[i], -clip[i], 255.0f - clip[i]);
  }
  return {std::move(delta)};
}

PerturbationClip bim_attack(const ClassifierNet& classifier, const VideoClip& clip, const BimConfig& cfg) {
  return bim_attack(classifier, clip.frames, clip.label, cfg);
}

std::vector<PerturbationClip> staggered_perturbations(const ClassifierNet& classifier, const LabeledStream& video,
                                                      int anchor, const BimConfig& cfg) {
  const int w = classifier.config().window;
  if (anchor - (w - 1) < 0 || anchor + w > video.num_frames()) {
    throw ShapeError("staggered_perturbations: anchor " + std::to_string(anchor) + " needs frames [" +
                     std::to_string(anchor - w + 1) + ", " + std::to_string(anchor + w) + ") but the video has " +
                     std::to_string(video.num_frames()));
  }
  std::vector<PerturbationClip> out;
  for (int j = 0; j < w; ++j) {
    const int start = anchor - j;
    out.push_back(bim_attack(classifier, stream_window(video, start, w), window_truth(video, start, w), cfg));
  }
  return out;
}

double normalized_correlation(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("normalized_correlation: size mismatch");
  const auto& k = kernels::active();
  const double na = k.dot(a.size(), a.data(), a.data());
  const double nb = k.dot(b.size(), b.data(), b.data());
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = k.dot(a.size(), a.data(), b.data()) / std::sqrt(na * nb);
  return std::clamp(c, -1.0, 1.0);
}

double normalized_correlation(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("normalized_correlation: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  return normalized_correlation(a.values(), b.values());
}

double CorrelationMatrix::mean_at_distance(int min_gap) const {
  double s = 0.0;
  int n = 0;
  for (int r = 0; r < w; ++r) {
    for (int c = 0; c < w; ++c) {
      if (std::abs(r - c) >= min_gap) s += at(r, c), ++n;
    }
  }
  return n ? s / n : 0.0;
}

CorrelationMatrix correlation_matrix(const std::vector<StaggeredSet>& samples) {
  if (samples.empty()) throw ConfigError("correlation_matrix: no samples");
  CorrelationMatrix cm;
  cm.w = static_cast<int>(samples.front().size());
  cm.m.assign(static_cast<std::size_t>(cm.w) * cm.w, 0.0);
  for (const StaggeredSet& set : samples) {
    if (static_cast<int>(set.size()) != cm.w) throw ShapeError("correlation_matrix: inconsistent staggered sets");
    for (int r = 0; r < cm.w; ++r) {
      for (int c = r; c < cm.w; ++c) {
        const double v = normalized_correlation(set[static_cast<std::size_t>(r)].values.slice(r),
                                                set[static_cast<std::size_t>(c)].values.slice(c));
        cm.m[static_cast<std::size_t>(r) * cm.w + c] += v;
        if (c != r) cm.m[static_cast<std::size_t>(c) * cm.w + r] += v;
      }
    }
  }
  cm.n_samples = static_cast<int>(samples.size());
  for (double& v : cm.m) v /= cm.n_samples;
  return cm;
}

std::vector<StaggeredSet> staggered_samples(const ClassifierNet& classifier, const std::vector<LabeledStream>& videos,
                                            int anchors_per_video, std::uint64_t seed, const BimConfig& cfg) {
  if (anchors_per_video < 1) throw ConfigError("correlation_matrix: anchors_per_video must be >= 1");
  const int w = classifier.config().window;
  std::vector<StaggeredSet> out;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const int lo = w - 1, hi = videos[v].num_frames() - w;  // valid anchors [lo, hi]
    if (hi < lo) {
      throw ShapeError("correlation_matrix: video " + std::to_string(v) + " has fewer than " +
                       std::to_string(2 * w - 1) + " frames");
    }
    std::mt19937_64 rng(derive_seed(seed, v));
    for (int a = 0; a < anchors_per_video; ++a) {
      const int anchor = lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
      out.push_back(staggered_perturbations(classifier, videos[v], anchor, cfg));
    }
  }
  if (out.empty()) throw ConfigError("correlation_matrix: no videos to sample");
  return out;
}

CorrelationMatrix correlation_matrix(const ClassifierNet& classifier, const std::vector<LabeledStream>& videos,
                                     int anchors_per_video, std::uint64_t seed, const BimConfig& cfg) {
  return correlation_matrix(staggered_samples(classifier, videos, anchors_per_video, seed, cfg));
}

std::vector<double> magnitude_profile(const std::vector<PerturbationClip>& perturbations) {
  if (perturbations.empty()) throw ConfigError("magnitude_profile: no perturbations");
  const int w = perturbations.front().frames();
  std::vector<double> prof(static_cast<std::size_t>(w), 0.0);
  const auto& k = kernels::active();
  for (const PerturbationClip& p : perturbations) {
    if (p.frames() != w) throw ShapeError("magnitude_profile: inconsistent clip lengths");
    for (int i = 0; i < w; ++i) {
      const auto f = p.values.slice(i);
      prof[static_cast<std::size_t>(i)] += k.abs_sum(f.size(), f.data()) / static_cast<double>(f.size());
    }
  }
  for (double& v : prof) v /= static_cast<double>(perturbations.size());
  return prof;
}

std::vector<double> magnitude_profile(const std::vector<StaggeredSet>& samples) {
  std::vector<PerturbationClip> all;
  for (const StaggeredSet& s : samples) all.insert(all.end(), s.begin(), s.end());
  return magnitude_profile(all);
}

namespace {

std::vector<double> mismatch_impl(const ClassifierNet& classifier, const std::vector<VideoClip>& clips,
                                  const std::vector<const PerturbationClip*>& per_clip) {
  if (clips.empty()) throw ConfigError("mismatch_curve: no clips");
  const int w = per_clip.front()->frames();
  std::vector<double> curve;
  const auto& k = kernels::active();
  for (int o = 0; o < w; ++o) {
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const PerturbationClip& p = *per_clip[i];
      if (p.values.shape() != clips[i].frames.shape()) throw ShapeError("mismatch_curve: perturbation shape mismatch");
      const Tensor pr = roll(p, o).values;
      Tensor x(clips[i].frames.shape());
      k.add_clamp(x.size(), clips[i].frames.data(), pr.data(), x.data(), 0.0f, 255.0f);
      inputs.push_back(std::move(x));
    }
    std::vector<const Tensor*> ptrs;
    for (const Tensor& t : inputs) ptrs.push_back(&t);
    const std::vector<int> pred = predict(classifier, ptrs);
    int fooled = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) fooled += pred[i] != clips[i].label;
    curve.push_back(static_cast<double>(fooled) / static_cast<double>(clips.size()));
  }
  return curve;
}

}  // namespace

std::vector<double> mismatch_curve(const ClassifierNet& classifier, const std::vector<VideoClip>& clips,
                                   const PerturbationClip& p) {
  return mismatch_impl(classifier, clips, std::vector<const PerturbationClip*>(clips.size(), &p));
}

std::vector<double> mismatch_curve(const ClassifierNet& classifier, const std::vector<VideoClip>& clips,
                                   const std::vector<PerturbationClip>& perturbations) {
  if (perturbations.size() != clips.size()) throw ShapeError("mismatch_curve: one perturbation per clip expected");
  std::vector<const PerturbationClip*> ptrs;
  for (const PerturbationClip& p : perturbations) ptrs.push_back(&p);
  return mismatch_impl(classifier, clips, ptrs);
}

void write_matrix_csv(const std::filesystem::path& path, const CorrelationMatrix& m) {
  std::ostringstream os;
  os << std::setprecision(9);
  for (int r = 0; r < m.w; ++r) {
    for (int c = 0; c < m.w; ++c) os << (c ? "," : "") << m.at(r, c);
    os << '\n';
  }
  io::atomic_write(path, os.str());
}

void write_vector_csv(const std::filesystem::path& path, const std::string& column, const std::vector<double>& v) {
  std::ostringstream os;
  os << "index," << column << '\n' << std::setprecision(9);
  for (std::size_t i = 0; i < v.size(); ++i) os << i << ',' << v[i] << '\n';
  io::atomic_write(path, os.str());
}

}  // namespace vidup
