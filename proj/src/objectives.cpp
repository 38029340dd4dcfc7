#include "vidup/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "vidup/errors.hpp"
#include "vidup/seeding.hpp"

namespace vidup {

std::string_view strategy_name(OffsetStrategy s) { return s == OffsetStrategy::SampleOne ? "sample_one" : "sum_all"; }

OffsetStrategy parse_offset_strategy(std::string_view s) {
  if (s == "sample_one") return OffsetStrategy::SampleOne;
  if (s == "sum_all") return OffsetStrategy::SumAll;
  throw ConfigError("loss config: offset_strategy must be sample_one or sum_all, got '" + std::string(s) + "'");
}

std::string_view attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::Up: return "up";
    case AttackKind::Dup: return "dup";
    case AttackKind::Cdup: return "cdup";
    case AttackKind::TwoDDup: return "2ddup";
  }
  return "?";
}

AttackKind parse_attack_kind(std::string_view s) {
  for (AttackKind k : {AttackKind::Up, AttackKind::Dup, AttackKind::Cdup, AttackKind::TwoDDup}) {
    if (attack_name(k) == s) return k;
  }
  throw ConfigError("attack kind must be one of up, dup, cdup, 2ddup; got '" + std::string(s) + "'");
}

GeneratorMode attack_generator_mode(AttackKind k) {
  return k == AttackKind::TwoDDup ? GeneratorMode::Frame2d : GeneratorMode::Clip3d;
}

void LossConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("loss config: lambda must be > 0");
  if (!(eps_log > 0.0 && eps_log < 1e-3)) throw ConfigError("loss config: eps_log must lie in (0, 1e-3)");
}

io::Json to_json(const LossConfig& c) {
  return {{"lambda", c.lambda}, {"eps_log", c.eps_log}, {"offset_strategy", strategy_name(c.offset_strategy)}};
}

LossConfig loss_config_from_json(const io::Json& j) {
  constexpr std::string_view ctx = "loss config";
  LossConfig c;
  c.lambda = io::get_number(j, "lambda", ctx);
  c.eps_log = io::get_number(j, "eps_log", ctx);
  c.offset_strategy = parse_offset_strategy(io::get_string(j, "offset_strategy", ctx));
  c.validate();
  return c;
}

namespace {

// -log(v) with v clamped to [eps, 1 - eps]; dlog is d(-log v)/dv, zero when clamped.
double neg_log(double v, double eps, double* dlog) {
  const double c = std::clamp(v, eps, 1.0 - eps);
  if (dlog) *dlog = (v == c) ? -1.0 / c : 0.0;
  return -std::log(c);
}

}  // namespace

double up_loss(std::span<const double> q_true, const LossConfig& cfg, std::vector<double>* grad) {
  double sum = 0.0;
  if (grad) grad->assign(q_true.size(), 0.0);
  for (std::size_t i = 0; i < q_true.size(); ++i) {
    const double q = std::clamp(q_true[i], cfg.eps_log, 1.0 - cfg.eps_log);
    sum += -std::log(1.0 - q);
    if (grad && q == q_true[i]) (*grad)[i] = 1.0 / (1.0 - q);
  }
  return sum;
}

double dup_loss(std::span<const double> q_target, std::span<const double> q_nontarget, const LossConfig& cfg,
                std::vector<double>* grad_target, std::vector<double>* grad_nontarget) {
  const double a = up_loss(q_target, cfg, grad_target);
  if (grad_target) {
    for (double& g : *grad_target) g *= cfg.lambda;
  }
  double b = 0.0;
  if (grad_nontarget) grad_nontarget->assign(q_nontarget.size(), 0.0);
  for (std::size_t i = 0; i < q_nontarget.size(); ++i) {
    double d = 0.0;
    b += neg_log(q_nontarget[i], cfg.eps_log, grad_nontarget ? &d : nullptr);
    if (grad_nontarget) (*grad_nontarget)[i] = d;
  }
  return cfg.lambda * a + b;
}

ClipBatch make_batch(const ClipDataset& data, std::span<const std::size_t> indices) {
  std::vector<const Tensor*> clips;
  ClipBatch b;
  for (std::size_t i : indices) {
    clips.push_back(&data.clips.at(i).frames);
    b.labels.push_back(data.clips[i].label);
  }
  b.x = stack_clips(clips);
  return b;
}

namespace {

// Adds the per-sample loss terms of one half to dlogits rows [row0, row0 + n).
// away: loss -log(1 - q_c) (push away from the true class); otherwise -log(q_c).
double half_loss(const Tensor& logits, int row0, const std::vector<int>& labels, bool away, double weight,
                 double eps, Tensor* dlogits) {
  const int K = logits.dim(1);
  double total = 0.0;
  std::vector<double> q(static_cast<std::size_t>(K));
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const int row = row0 + static_cast<int>(s);
    const float* l = logits.data() + static_cast<std::size_t>(row) * K;
    const double m = *std::max_element(l, l + K);
    double z = 0.0;
    for (int j = 0; j < K; ++j) z += (q[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(l[j]) - m));
    for (double& v : q) v /= z;
    const int c = labels[s];
    const double qc = q[static_cast<std::size_t>(c)];
    // 1 - q_c summed from the other classes keeps precision when q_c is near 1.
    double rest = 0.0;
    for (int j = 0; j < K; ++j) {
      if (j != c) rest += q[static_cast<std::size_t>(j)];
    }
    double dv = 0.0;
    total += neg_log(away ? rest : qc, eps, dlogits ? &dv : nullptr);
    if (!dlogits || dv == 0.0) continue;
    float* g = dlogits->data() + static_cast<std::size_t>(row) * K;
    if (away) {
      // d rest / d l_j = -q_c * rest for j = c, q_j * q_c otherwise.
      for (int j = 0; j < K; ++j) {
        const double dr = j == c ? -qc * rest : q[static_cast<std::size_t>(j)] * qc;
        g[j] += static_cast<float>(weight * dv * dr);
      }
    } else {
      for (int j = 0; j < K; ++j) {
        const double dq = qc * ((j == c ? 1.0 : 0.0) - q[static_cast<std::size_t>(j)]);
        g[j] += static_cast<float>(weight * dv * dq);
      }
    }
  }
  return total;
}

}  // namespace

ObjectiveValue batch_objective(const ClassifierNet& classifier, AttackKind kind, const ClipBatch& targets,
                               const ClipBatch& nontargets, const Tensor& perturbations, std::span<const int> offsets,
                               const LossConfig& cfg, bool want_grad) {
  cfg.validate();
  const Shape clip = classifier.config().clip_shape();
  if (perturbations.rank() != 5 || Shape(perturbations.shape().begin() + 1, perturbations.shape().end()) != clip) {
    throw ShapeError("objective: perturbations " + shape_str(perturbations.shape()) + " do not match clips " +
                     shape_str(clip));
  }
  for (const ClipBatch* b : {&targets, &nontargets}) {
    if (b->size() && Shape(b->x.shape().begin() + 1, b->x.shape().end()) != clip) {
      throw ShapeError("objective: batch " + shape_str(b->x.shape()) + " does not match classifier clips " +
                       shape_str(clip));
    }
  }
  if (offsets.empty()) throw ConfigError("objective: no offsets to evaluate");
  const int nt = targets.size(), ns = nontargets.size(), n = nt + ns;
  if (n == 0) throw ShapeError("objective: empty batch");
  const int B = perturbations.dim(0);
  const int w = clip[0];
  const std::size_t clip_size = shape_size(clip);
  const bool up = kind == AttackKind::Up;

  ObjectiveValue out;
  if (want_grad) out.grad = Tensor(perturbations.shape());
  const double inv_off = 1.0 / static_cast<double>(offsets.size());
  const double wt = up ? 1.0 / n : (nt ? cfg.lambda / nt : 0.0);
  const double ws = up ? 1.0 / n : (ns ? 1.0 / ns : 0.0);

  Shape batch_shape{n};
  batch_shape.insert(batch_shape.end(), clip.begin(), clip.end());
  for (int o : offsets) {
    std::vector<Tensor> rolled;
    for (int b = 0; b < B; ++b) {
      Tensor p(clip);
      std::copy(perturbations.slice(b).begin(), perturbations.slice(b).end(), p.values().begin());
      rolled.push_back(roll_frames(p, o));
    }
    Tensor x(batch_shape);
    for (int k = 0; k < n; ++k) {
      const auto src = k < nt ? targets.x.slice(k) : nontargets.x.slice(k - nt);
      const Tensor& p = rolled[static_cast<std::size_t>(k % B)];
      float* dst = x.slice(k).data();
      for (std::size_t i = 0; i < clip_size; ++i) dst[i] = src[i] + p[i];
    }
    nn::Tape tape;
    const Tensor logits = classifier.forward_logits(x, tape, nn::Mode::Inference);
    Tensor dlogits;
    if (want_grad) dlogits = Tensor(logits.shape());
    Tensor* dl = want_grad ? &dlogits : nullptr;
    const double a = half_loss(logits, 0, targets.labels, true, wt * inv_off, cfg.eps_log, dl);
    const double s = half_loss(logits, nt, nontargets.labels, up, ws * inv_off, cfg.eps_log, dl);
    out.target_term += (nt ? a / nt : 0.0) * inv_off;
    out.nontarget_term += (ns ? s / ns : 0.0) * inv_off;
    out.loss += (wt * a + ws * s) * inv_off;
    if (!want_grad) continue;
    const Tensor dx = classifier.backward_input(dlogits, tape);
    for (int k = 0; k < n; ++k) {
      const auto g = dx.slice(k);
      float* acc = out.grad.slice(k % B).data();
      const std::size_t frame = clip_size / static_cast<std::size_t>(w);
      // x + roll(p, o): frame i of the input carries frame (i + o) mod w of p.
      for (int i = 0; i < w; ++i) {
        const std::size_t src = static_cast<std::size_t>(i) * frame;
        const std::size_t dst = static_cast<std::size_t>(((i + o) % w + w) % w) * frame;
        for (std::size_t e = 0; e < frame; ++e) acc[dst + e] += g[src + e];
      }
    }
  }
  return out;
}

std::vector<int> objective_offsets(OffsetStrategy s, int w, std::mt19937_64& rng) {
  if (s == OffsetStrategy::SumAll) {
    std::vector<int> all(static_cast<std::size_t>(w));
    for (int o = 0; o < w; ++o) all[static_cast<std::size_t>(o)] = o;
    return all;
  }
  return {static_cast<int>(rng() % static_cast<std::uint64_t>(w))};
}

namespace {

Tensor with_batch_axis(Tensor t) {
  Shape s{1};
  s.insert(s.end(), t.shape().begin(), t.shape().end());
  t.reshape(std::move(s));
  return t;
}

}  // namespace

double cdup_loss(const GeneratorNet& gen, const ClassifierNet& classifier, const ClipBatch& targets,
                 const ClipBatch& nontargets, const NoiseVector& z, const LossConfig& cfg, std::mt19937_64& rng) {
  if (gen.mode() != GeneratorMode::Clip3d) throw ConfigError("cdup_loss: generator must be clip3d");
  const Tensor p = with_batch_axis(generate(gen, z));
  const std::vector<int> offsets = objective_offsets(cfg.offset_strategy, p.dim(1), rng);
  return batch_objective(classifier, AttackKind::Cdup, targets, nontargets, p, offsets, cfg, false).loss;
}

double twod_dup_loss(const GeneratorNet& gen2d, const ClassifierNet& classifier, const ClipBatch& targets,
                     const ClipBatch& nontargets, const NoiseVector& z, const LossConfig& cfg) {
  if (gen2d.mode() != GeneratorMode::Frame2d) throw ConfigError("twod_dup_loss: generator must be frame2d");
  const PerturbationClip p = as_clip(gen2d, generate(gen2d, z), classifier.config().window);
  const int zero[] = {0};
  return batch_objective(classifier, AttackKind::TwoDDup, targets, nontargets, with_batch_axis(p.values), zero, cfg,
                         false)
      .loss;
}

BalancedBatcher::BalancedBatcher(ClipDataset target_pool, ClipDataset nontarget_pool, int undersample_factor,
                                 int batch, std::uint64_t seed)
    : target_(std::move(target_pool)),
      nontarget_(std::move(nontarget_pool)),
      factor_(undersample_factor),
      batch_(batch),
      seed_(seed) {
  if (batch_ < 2 || batch_ % 2) throw ConfigError("batcher: batch must be even and >= 2");
  if (factor_ < 1) throw ConfigError("batcher: undersample_factor must be >= 1");
  if (target_.clips.empty() || nontarget_.clips.empty()) throw ConfigError("batcher: both pools must be nonempty");
}

std::size_t BalancedBatcher::nontargets_per_epoch() const {
  return std::max<std::size_t>(1, nontarget_.size() / static_cast<std::size_t>(factor_));
}

void BalancedBatcher::refill(Cursor& c, std::size_t pool_size, std::size_t visible, std::uint64_t salt) {
  std::mt19937_64 rng(derive_seed(seed_, salt, c.epoch));
  std::vector<std::size_t> perm(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) perm[i] = i;
  for (std::size_t i = pool_size; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  perm.resize(visible);
  c.order = std::move(perm);
  c.next = 0;
  ++c.epoch;
}

std::vector<std::size_t> BalancedBatcher::draw(Cursor& c, std::size_t pool_size, std::size_t visible,
                                               std::uint64_t salt, int n) {
  std::vector<std::size_t> out;
  while (static_cast<int>(out.size()) < n) {
    if (c.next >= c.order.size()) refill(c, pool_size, visible, salt);
    out.push_back(c.order[c.next++]);
  }
  return out;
}

std::pair<ClipBatch, ClipBatch> BalancedBatcher::next_batch() {
  const int half = batch_ / 2;
  const auto t = draw(tcur_, target_.size(), target_.size(), 1, half);
  const auto s = draw(scur_, nontarget_.size(), nontargets_per_epoch(), 2, half);
  return {make_batch(target_, t), make_batch(nontarget_, s)};
}

}  // namespace vidup
