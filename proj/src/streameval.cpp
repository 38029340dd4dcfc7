#include "vidup/streameval.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "vidup/errors.hpp"
#include "vidup/kernels/kernels.hpp"

namespace vidup {

void SlidingWindowConfig::validate() const {
  if (w < 1) throw ConfigError("sliding window: w must be >= 1");
  if (stride < 1) throw ConfigError("sliding window: stride must be >= 1");
  if (start < 0) throw ConfigError("sliding window: start must be >= 0");
}

io::Json to_json(const SlidingWindowConfig& c) { return {{"w", c.w}, {"stride", c.stride}, {"start", c.start}}; }

SlidingWindowConfig window_config_from_json(const io::Json& j) {
  constexpr std::string_view ctx = "sliding window";
  SlidingWindowConfig c{io::get_int(j, "w", ctx), io::get_int(j, "stride", ctx), io::get_int(j, "start", ctx)};
  c.validate();
  return c;
}

LabeledStream inject(const LabeledStream& stream, const PerturbationClip& p, int attacker_phase) {
  const int w = p.frames();
  const std::size_t frame = stream.frames.size() / static_cast<std::size_t>(std::max(1, stream.num_frames()));
  if (p.values.size() != frame * static_cast<std::size_t>(w)) {
    throw ShapeError("inject: perturbation " + shape_str(p.values.shape()) + " does not match stream frames " +
                     shape_str(stream.frames.shape()));
  }
  LabeledStream out = stream;
  const auto& k = kernels::active();
  for (int t = 0; t < stream.num_frames(); ++t) {
    const int j = ((t + attacker_phase) % w + w) % w;
    k.add_clamp(frame, stream.frames.slice(t).data(), p.values.slice(j).data(), out.frames.slice(t).data(), 0.0f,
                255.0f);
  }
  return out;
}

int window_truth(const LabeledStream& stream, int window_start, int w) {
  if (window_start < 0 || window_start + w > stream.num_frames()) {
    throw ShapeError("window_truth: window [" + std::to_string(window_start) + ", " +
                     std::to_string(window_start + w) + ") outside the stream");
  }
  int best = -1, best_count = 0;
  std::vector<std::pair<int, int>> counts;  // label, frames, in order of first appearance
  for (const Segment& s : stream.segments) {
    const int n = std::min(s.end, window_start + w) - std::max(s.start, window_start);
    if (n <= 0) continue;
    auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.first == s.label; });
    if (it == counts.end()) {
      counts.emplace_back(s.label, n);
    } else {
      it->second += n;
    }
  }
  for (const auto& [label, n] : counts) {
    if (n > best_count) best = label, best_count = n;
  }
  return best;
}

std::vector<int> window_starts(int num_frames, const SlidingWindowConfig& cfg) {
  cfg.validate();
  std::vector<int> starts;
  for (int s = cfg.start; s + cfg.w <= num_frames; s += cfg.stride) starts.push_back(s);
  return starts;
}

namespace {

bool inside_one_segment(const LabeledStream& stream, int start, int w) {
  for (const Segment& s : stream.segments) {
    if (start >= s.start && start + w <= s.end) return true;
  }
  return false;
}

void finish_means(OffsetRates& r) {
  r.target_mean = r.nontarget_mean = 0.0;
  for (double v : r.target) r.target_mean += v;
  for (double v : r.nontarget) r.nontarget_mean += v;
  if (!r.target.empty()) {
    r.target_mean /= static_cast<double>(r.target.size());
    r.nontarget_mean /= static_cast<double>(r.nontarget.size());
  }
}

double ratio(int a, int b) { return b ? static_cast<double>(a) / b : 0.0; }

}  // namespace

StreamEvalReport evaluate_stream(const ClassifierNet& classifier, const LabeledStream& stream,
                                 const PerturbationClip& p, const std::set<int>& targets,
                                 const SlidingWindowConfig& cfg) {
  cfg.validate();
  if (p.frames() != cfg.w) throw ShapeError("evaluate_stream: perturbation length differs from the window size");
  if (stream.num_frames() < cfg.w) throw ShapeError("evaluate_stream: stream shorter than one window");
  StreamEvalReport rep;
  rep.config = cfg;
  rep.targets.assign(targets.begin(), targets.end());
  const std::vector<int> starts = window_starts(stream.num_frames(), cfg);
  if (starts.empty()) throw ShapeError("evaluate_stream: no window fits after the start position");
  std::vector<int> truth;
  std::vector<char> interior;
  for (int s : starts) {
    truth.push_back(window_truth(stream, s, cfg.w));
    interior.push_back(inside_one_segment(stream, s, cfg.w));
    const bool is_target = targets.count(truth.back()) > 0;
    rep.target_windows += is_target;
    rep.nontarget_windows += !is_target;
    rep.interior_windows += interior.back();
  }
  rep.windows = static_cast<int>(starts.size());

  for (int o = 0; o < cfg.w; ++o) {
    const int phase = ((o - cfg.start) % cfg.w + cfg.w) % cfg.w;
    const LabeledStream attacked = inject(stream, p, phase);
    std::vector<Tensor> windows;
    windows.reserve(starts.size());
    for (int s : starts) windows.push_back(stream_window(attacked, s, cfg.w));
    std::vector<const Tensor*> ptrs;
    for (const Tensor& t : windows) ptrs.push_back(&t);
    const std::vector<int> pred = predict(classifier, ptrs);
    int tf = 0, sk = 0, itn = 0, itf = 0, isn = 0, isk = 0;
    for (std::size_t i = 0; i < starts.size(); ++i) {
      const bool is_target = targets.count(truth[i]) > 0;
      const bool correct = pred[i] == truth[i];
      if (is_target) {
        tf += !correct;
      } else {
        sk += correct;
      }
      if (interior[i]) {
        (is_target ? itn : isn) += 1;
        if (is_target) {
          itf += !correct;
        } else {
          isk += correct;
        }
      }
    }
    rep.all.target.push_back(ratio(tf, rep.target_windows));
    rep.all.nontarget.push_back(ratio(sk, rep.nontarget_windows));
    rep.interior.target.push_back(ratio(itf, itn));
    rep.interior.nontarget.push_back(ratio(isk, isn));
  }
  finish_means(rep.all);
  finish_means(rep.interior);
  return rep;
}

ClipEvalReport evaluate_clips(const ClassifierNet& classifier, const ClipDataset& clips, const PerturbationClip& p,
                              const std::set<int>& targets) {
  const int w = p.frames();
  ClipEvalReport rep;
  rep.targets.assign(targets.begin(), targets.end());
  for (const VideoClip& c : clips.clips) {
    if (c.frames.shape() != p.values.shape()) {
      throw ShapeError("evaluate_clips: clip " + shape_str(c.frames.shape()) + " does not match perturbation " +
                       shape_str(p.values.shape()));
    }
    (targets.count(c.label) ? rep.target_clips : rep.nontarget_clips) += 1;
  }
  const auto& k = kernels::active();
  for (int o = 0; o < w; ++o) {
    const Tensor pr = roll(p, o).values;
    std::vector<Tensor> inputs;
    inputs.reserve(clips.size());
    for (const VideoClip& c : clips.clips) {
      Tensor x(c.frames.shape());
      k.add_clamp(x.size(), c.frames.data(), pr.data(), x.data(), 0.0f, 255.0f);
      inputs.push_back(std::move(x));
    }
    std::vector<const Tensor*> ptrs;
    for (const Tensor& t : inputs) ptrs.push_back(&t);
    const std::vector<int> pred = predict(classifier, ptrs);
    int tf = 0, sk = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const int label = clips.clips[i].label;
      if (targets.count(label)) {
        tf += pred[i] != label;
      } else {
        sk += pred[i] == label;
      }
    }
    rep.rates.target.push_back(ratio(tf, rep.target_clips));
    rep.rates.nontarget.push_back(ratio(sk, rep.nontarget_clips));
  }
  finish_means(rep.rates);
  return rep;
}

Tensor smooth_scores(const Tensor& raw, int smooth_k) {
  if (smooth_k < 1 || smooth_k % 2 == 0) throw ConfigError("score curves: smooth_k must be odd and >= 1");
  const int n = raw.dim(0), K = raw.dim(1), half = smooth_k / 2;
  Tensor out(raw.shape());
  for (int t = 0; t < n; ++t) {
    const int lo = std::max(0, t - half), hi = std::min(n - 1, t + half);
    for (int c = 0; c < K; ++c) {
      double s = 0.0;
      for (int u = lo; u <= hi; ++u) s += raw[static_cast<std::size_t>(u) * K + c];
      out[static_cast<std::size_t>(t) * K + c] = static_cast<float>(s / (hi - lo + 1));
    }
  }
  return out;
}

Tensor score_curves(const ClassifierNet& classifier, const LabeledStream& stream, const SlidingWindowConfig& cfg,
                    int smooth_k) {
  if (smooth_k < 1 || smooth_k % 2 == 0) throw ConfigError("score curves: smooth_k must be odd and >= 1");
  const std::vector<int> starts = window_starts(stream.num_frames(), cfg);
  const int K = classifier.config().classes;
  Tensor raw({static_cast<int>(starts.size()), K});
  constexpr std::size_t kChunk = 32;
  for (std::size_t i0 = 0; i0 < starts.size(); i0 += kChunk) {
    std::vector<Tensor> windows;
    for (std::size_t i = i0; i < std::min(starts.size(), i0 + kChunk); ++i) {
      windows.push_back(stream_window(stream, starts[i], cfg.w));
    }
    std::vector<const Tensor*> ptrs;
    for (const Tensor& t : windows) ptrs.push_back(&t);
    const Tensor s = classifier.scores(stack_clips(ptrs));
    std::copy(s.values().begin(), s.values().end(), raw.data() + i0 * static_cast<std::size_t>(K));
  }
  return smooth_scores(raw, smooth_k);
}

void write_rates_csv(const std::filesystem::path& path, const OffsetRates& r) {
  std::ostringstream os;
  os << "offset,target_rate,nontarget_rate\n" << std::setprecision(9);
  for (std::size_t o = 0; o < r.target.size(); ++o) os << o << ',' << r.target[o] << ',' << r.nontarget[o] << '\n';
  io::atomic_write(path, os.str());
}

io::Json to_json(const OffsetRates& r) {
  return {{"target", r.target},
          {"nontarget", r.nontarget},
          {"target_mean", r.target_mean},
          {"nontarget_mean", r.nontarget_mean}};
}

io::Json to_json(const StreamEvalReport& r) {
  return {{"config", to_json(r.config)},     {"targets", r.targets},
          {"windows", r.windows},            {"target_windows", r.target_windows},
          {"nontarget_windows", r.nontarget_windows}, {"all", to_json(r.all)},
          {"interior_windows", r.interior_windows},   {"interior", to_json(r.interior)}};
}

io::Json to_json(const ClipEvalReport& r) {
  return {{"targets", r.targets},
          {"target_clips", r.target_clips},
          {"nontarget_clips", r.nontarget_clips},
          {"rates", to_json(r.rates)}};
}

void write_score_curves_csv(const std::filesystem::path& path, const Tensor& curves,
                            const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << "window";
  for (const std::string& n : class_names) os << ',' << n;
  os << '\n' << std::setprecision(7);
  const int K = curves.dim(1);
  for (int t = 0; t < curves.dim(0); ++t) {
    os << t;
    for (int c = 0; c < K; ++c) os << ',' << curves[static_cast<std::size_t>(t) * K + c];
    os << '\n';
  }
  io::atomic_write(path, os.str());
}

}  // namespace vidup
