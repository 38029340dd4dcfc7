// Acceptance run: eight criteria on the desk-scale recipe (configs/desk.json),
// each reported on a single PASS/FAIL line at the end.
//
//   acceptance [work_dir]
//
// Stages write under work_dir (default ./acceptance_run) and are always
// recomputed from scratch.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vidup/errors.hpp"
#include "vidup/experiment.hpp"

using namespace vidup;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Accumulates individual checks of one criterion.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  Outcome outcome() const {
    std::string d;
    for (const auto& n : notes_) d += (d.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) d += (d.empty() ? "" : "; ") + std::string("FAILED ") + f;
    return {failures_.empty(), d};
  }

 private:
  std::vector<std::string> failures_, notes_;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string vec_str(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt("%.3f", v[i]);
  return s + "]";
}

void log(const std::string& s) { std::printf("  .. %s\n", s.c_str()), std::fflush(stdout); }

StageOptions stage_opts() {
  StageOptions o;
  o.force = true;
  o.log = [](const std::string& m) {
    if (m.find('\n') == std::string::npos) log(m);
  };
  return o;
}

Tensor random_tensor(Shape shape, float lo, float hi, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& v : t.values()) v = u(rng);
  return t;
}

double l2(const Tensor& t) {
  double s = 0.0;
  for (float v : t.values()) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin(),
                                              [](float x, float y) { return std::memcmp(&x, &y, sizeof x) == 0; });
}

// ---------------------------------------------------------------------------

Outcome algebraic_suite(const ExperimentConfig& desk) {
  Checks c;
  std::mt19937_64 rng(101);
  const int w = desk.data.window;

  // roll: identity, group law, norm preservation
  const PerturbationClip p{random_tensor({w, 8, 8, 3}, -10.0f, 10.0f, rng)};
  c.expect(same_bits(roll(p, 0).values, p.values), "roll(p, 0) == p");
  bool group = true, norm = true;
  std::vector<float> sorted_p(p.values.values().begin(), p.values.values().end());
  std::sort(sorted_p.begin(), sorted_p.end());
  for (int a = 0; a < w; ++a) {
    const PerturbationClip ra = roll(p, a);
    std::vector<float> sorted_r(ra.values.values().begin(), ra.values.values().end());
    std::sort(sorted_r.begin(), sorted_r.end());
    norm &= sorted_r == sorted_p && std::fabs(l2(ra.values) - l2(p.values)) <= 1e-12 * l2(p.values);
    for (int b = 0; b < w; ++b) group &= same_bits(roll(ra, b).values, roll(p, (a + b) % w).values);
  }
  c.expect(group, "roll group law");
  c.expect(norm, "roll norm preservation");

  // tile fixed point
  const PerturbationFrame f{random_tensor({8, 8, 3}, -10.0f, 10.0f, rng)};
  const PerturbationClip t = tile(f, w);
  bool fixed = true;
  for (int o = 0; o < w; ++o) fixed &= same_bits(roll(t, o).values, t.values);
  c.expect(fixed, "tile fixed under roll");

  // correlation identities
  const Tensor a = random_tensor({4, 6, 6, 3}, -1.0f, 1.0f, rng);
  Tensor neg = a, half1({4, 6, 6, 3}), half2({4, 6, 6, 3});
  for (float& v : neg.values()) v = -v;
  for (std::size_t i = 0; i < a.size(); ++i) (i < a.size() / 2 ? half1 : half2)[i] = a[i] + 2.0f;
  c.expect(std::fabs(normalized_correlation(a, a) - 1.0) <= 1e-12, "corr(a, a) = 1");
  c.expect(std::fabs(normalized_correlation(a, neg) + 1.0) <= 1e-12, "corr(a, -a) = -1");
  c.expect(normalized_correlation(half1, half2) == 0.0, "corr(orthogonal) = 0");

  // ScoreVector normalization
  const ClassifierNet net = build_classifier(desk.classifier_config());
  double worst = 0.0;
  bool range = true;
  for (int i = 0; i < 8; ++i) {
    const Tensor x = random_tensor(desk.classifier_config().clip_shape(), i % 2 ? -300.0f : 0.0f, 555.0f, rng);
    const ScoreVector s = classify(net, x);
    double sum = 0.0;
    for (float v : s.scores) sum += v, range &= v >= 0.0f && v <= 1.0f;
    worst = std::max(worst, std::fabs(sum - 1.0));
  }
  c.expect(worst <= 1e-5 && range, "score normalization");

  // xi bound on generator outputs, including extreme latent vectors
  bool bounded = true;
  for (AttackKind k : {AttackKind::Cdup, AttackKind::TwoDDup}) {
    for (float xi : {10.0f, 2.5f}) {
      GeneratorConfig gc = desk.generator_config(k);
      gc.xi = xi;
      const GeneratorNet gen = build_generator(gc);
      for (int i = 0; i < 6; ++i) {
        NoiseVector z = sample_noise(gc.noise_dim, 1000 + i);
        for (float& v : z.z) v *= static_cast<float>(std::pow(10.0, i));
        bounded &= max_abs(generate(gen, z).values()) <= xi;
      }
    }
  }
  c.expect(bounded, "xi bound");
  c.note(fmt("max |sum - 1| = %.2e", worst));
  return c.outcome();
}

Outcome loss_oracles() {
  Checks c;
  const LossConfig l1;
  LossConfig l2cfg;
  l2cfg.lambda = 2.0;
  const auto near = [](double x, double y) { return std::fabs(x - y) <= 1e-6; };
  const double ln2 = 0.6931471805599453, ln10 = 2.302585092994046, ln08 = 0.2231435513142097;
  c.expect(near(up_loss(std::vector<double>{0.5}, l1), ln2), "up_loss([0.5])");
  const double up0 = up_loss(std::vector<double>{0.0}, l1);
  c.expect(up0 >= 0.0 && up0 <= -std::log1p(-1e-8) + 1e-15, "up_loss([0])");
  c.expect(near(up_loss(std::vector<double>{0.5, 0.9}, l1), ln2 + ln10), "up_loss([0.5, 0.9])");
  c.expect(near(dup_loss(std::vector<double>{0.5}, std::vector<double>{0.8}, l1), ln2 + ln08), "dup_loss(0.5, 0.8)");
  c.expect(near(dup_loss(std::vector<double>{0.0}, std::vector<double>{1.0}, l1), 0.0), "dup_loss(0, 1)");
  c.expect(near(dup_loss(std::vector<double>{0.5}, std::vector<double>{}, l2cfg), 2.0 * ln2), "dup_loss lambda=2");

  // Affine in lambda.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  std::vector<double> qt(5), qs(7);
  for (double& q : qt) q = u(rng);
  for (double& q : qs) q = u(rng);
  LossConfig la = l1, lb = l1, lc = l1;
  la.lambda = 1.0, lb.lambda = 2.0, lc.lambda = 3.5;
  const double A = dup_loss(qt, qs, la), B = dup_loss(qt, qs, lb), C = dup_loss(qt, qs, lc);
  c.expect(std::fabs(C - (A + 2.5 * (B - A))) <= 1e-9 * std::fabs(C), "dup_loss affine in lambda");

  // Circular objective with every offset versus explicit rolls on a w=4 net.
  ClassifierConfig cc;
  cc.classes = 3;
  cc.window = 4;
  cc.height = cc.width = 8;
  cc.channels = 3;
  cc.conv_channels = {3, 4};
  cc.fc_width = 5;
  cc.seed = 5;
  const ClassifierNet net = build_classifier(cc);
  std::mt19937_64 drng(3);
  ClipBatch T{random_tensor({2, 4, 8, 8, 3}, 0.0f, 255.0f, drng), {0, 0}};
  ClipBatch S{random_tensor({2, 4, 8, 8, 3}, 0.0f, 255.0f, drng), {1, 2}};
  const Tensor P = random_tensor({1, 4, 8, 8, 3}, -10.0f, 10.0f, drng);
  std::mt19937_64 orng(1);
  const std::vector<int> offsets = objective_offsets(OffsetStrategy::SumAll, 4, orng);
  const double lib = batch_objective(net, AttackKind::Cdup, T, S, P, offsets, l1, false).loss;
  const std::size_t frame = 8 * 8 * 3;
  double brute = 0.0;
  for (int o = 0; o < 4; ++o) {
    const auto half = [&](const ClipBatch& b, bool target) {
      double sum = 0.0;
      for (int n = 0; n < b.size(); ++n) {
        Tensor x({1, 4, 8, 8, 3});
        for (int t = 0; t < 4; ++t) {
          for (std::size_t i = 0; i < frame; ++i) {
            const float v = b.x[(n * 4 + t) * frame + i] + P[((t + o) % 4) * frame + i];
            x[t * frame + i] = std::clamp(v, 0.0f, 255.0f);
          }
        }
        const Tensor s = net.scores(x);
        const int y = b.labels[n];
        double rest = 0.0;
        for (int k = 0; k < 3; ++k) rest += k == y ? 0.0 : s[k];
        const double q = std::clamp(static_cast<double>(s[y]), 1e-8, 1.0 - 1e-8);
        sum += target ? -std::log(std::max(rest, 1e-8)) : -std::log(q);
      }
      return sum / b.size();
    };
    brute += (half(T, true) + half(S, false)) / 4.0;
  }
  c.expect(offsets == std::vector<int>{0, 1, 2, 3}, "sum_all covers every offset");
  c.expect(std::fabs(lib - brute) <= 1e-6 * std::max(1.0, std::fabs(brute)), "cdup sum_all vs brute force");
  c.note(fmt("cdup sum_all rel err %.1e", std::fabs(lib - brute) / std::fabs(brute)));

  // Central differences on the loss gradients.
  double worst = 0.0;
  std::vector<double> gu, gt, gs;
  up_loss(qt, l1, &gu);
  dup_loss(qt, qs, la, &gt, &gs);
  const double h = 1e-6;
  for (std::size_t i = 0; i < qt.size(); ++i) {
    auto qp = qt, qm = qt;
    qp[i] += h, qm[i] -= h;
    const double fd_up = (up_loss(qp, l1) - up_loss(qm, l1)) / (2 * h);
    const double fd_dup = (dup_loss(qp, qs, la) - dup_loss(qm, qs, la)) / (2 * h);
    worst = std::max({worst, std::fabs(fd_up - gu[i]) / std::fabs(gu[i]), std::fabs(fd_dup - gt[i]) / std::fabs(gt[i])});
  }
  for (std::size_t i = 0; i < qs.size(); ++i) {
    auto qp = qs, qm = qs;
    qp[i] += h, qm[i] -= h;
    const double fd = (dup_loss(qt, qp, la) - dup_loss(qt, qm, la)) / (2 * h);
    worst = std::max(worst, std::fabs(fd - gs[i]) / std::fabs(gs[i]));
  }
  c.expect(worst <= 1e-4, "loss gradients vs central differences");
  c.note(fmt("worst gradient rel err %.1e", worst));
  return c.outcome();
}

// ---------------------------------------------------------------------------

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double minutes() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  }
};

void expect_budget(Checks& c, const Timer& t, double budget_min) {
  c.note(fmt("%.1f min", t.minutes()));
  c.expect(t.minutes() <= budget_min, "time budget " + fmt("%.0f min", budget_min));
}

bool constant(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

std::map<fs::path, std::string> read_csvs(const fs::path& root) {
  std::map<fs::path, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") out[fs::relative(e.path(), root)] = io::read_file(e.path());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_run");
  ExperimentConfig desk = load_experiment_config(fs::path(VIDUP_SOURCE_DIR) / "configs" / "desk.json");
  desk.output_dir = work / "desk";
  ExperimentConfig temporal = desk;
  temporal.attack.targets = {class_id(synthetic_class_names(desk.data.classes), "oscillate")};
  const StageOptions opts = stage_opts();

  std::vector<std::pair<std::string, Outcome>> results;
  const auto run = [&](const std::string& name, const std::function<Outcome()>& f) {
    std::printf("-- %s\n", name.c_str());
    std::fflush(stdout);
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("  => %s\n", o.pass ? "pass" : "FAIL");
    results.emplace_back(name, o);
  };

  run("1 algebraic suite", [&] {
    Timer t;
    Outcome o = algebraic_suite(desk);
    o.pass &= t.minutes() <= 1.0;
    o.detail += fmt("; %.1f s", t.minutes() * 60);
    return o;
  });
  run("2 loss oracle suite", [&] {
    Timer t;
    Outcome o = loss_oracles();
    o.pass &= t.minutes() <= 1.0;
    o.detail += fmt("; %.1f s", t.minutes() * 60);
    return o;
  });

  run("3 classifier baseline", [&] {
    Timer t;
    Checks c;
    run_data(desk, opts);
    const ClassifierResult r = run_train_classifier(desk, opts);
    c.note(fmt("test accuracy %.4f", r.test_accuracy));
    c.expect(r.test_accuracy >= 0.90, "accuracy >= 0.90");
    expect_budget(c, t, 15);
    return c.outcome();
  });

  run("4 boundary effect", [&] {
    Timer t;
    Checks c;
    const BoundaryResult r = run_boundary(desk, opts);
    const int w = r.correlation.w;
    double diag = 0.0;
    for (int i = 0; i < w; ++i) diag = std::max(diag, std::fabs(r.correlation.at(i, i) - 1.0));
    const double far = r.correlation.mean_at_distance(4);
    const double m0 = r.mismatch[0], mid = r.mismatch[w / 2], last = r.mismatch[w - 1];
    c.note(fmt("diag err %.1e", diag) + fmt(", mean corr |gap|>=4 %.3f", far));
    c.note("mismatch " + vec_str(r.mismatch));
    c.expect(diag <= 1e-6, "unit diagonal");
    c.expect(far <= 0.85, "far correlation <= 0.85");
    c.expect(m0 >= mid + 0.15, "success(0) >= success(w/2) + 0.15");
    c.expect(last >= mid + 0.10, "success(w-1) >= success(w/2) + 0.10");
    expect_budget(c, t, 20);
    return c.outcome();
  });

  std::map<std::string, EvalResult> evals;
  const auto attack = [&](const ExperimentConfig& cfg, AttackKind k) {
    run_train_attack(cfg, k, opts);
    EvalResult e = run_eval(cfg, k, opts);
    evals[run_name(k, cfg.attack.targets)] = e;
    return e;
  };

  run("5 stealth separation", [&] {
    Timer t;
    Checks c;
    const EvalResult up = attack(desk, AttackKind::Up);
    const EvalResult dup = attack(desk, AttackKind::Dup);
    // Aligned clip-level rates (offset 0), as in the non-streaming setting.
    const double up_t = up.clips.rates.target[0], up_n = up.clips.rates.nontarget[0];
    const double dup_t = dup.clips.rates.target[0], dup_n = dup.clips.rates.nontarget[0];
    c.note(fmt("UP target %.3f", up_t) + fmt(" retention %.3f", up_n));
    c.note(fmt("DUP target %.3f", dup_t) + fmt(" retention %.3f", dup_n));
    c.expect(dup_n - up_n >= 0.20, "DUP retention - UP retention >= 0.20");
    c.expect(std::fabs(dup_t - up_t) <= 0.10, "|DUP target - UP target| <= 0.10");
    expect_budget(c, t, 30);
    return c.outcome();
  });

  run("6 circular robustness", [&] {
    Timer t;
    Checks c;
    const EvalResult cd = attack(desk, AttackKind::Cdup);
    const auto it = evals.find(run_name(AttackKind::Dup, desk.attack.targets));
    if (it == evals.end()) throw Error("DUP evaluation missing");
    const auto& v = cd.stream.all.target;
    const double mn = *std::min_element(v.begin(), v.end()), mx = *std::max_element(v.begin(), v.end());
    c.note("C-DUP stream target " + vec_str(v));
    c.note(fmt("C-DUP mean %.3f", cd.stream.all.target_mean) +
           fmt(", DUP mean %.3f", it->second.stream.all.target_mean));
    c.expect(mn >= 0.8 * mx, "min >= 0.8 max over offsets");
    c.expect(cd.stream.all.target_mean - it->second.stream.all.target_mean >= 0.10, "C-DUP mean - DUP mean >= 0.10");
    expect_budget(c, t, 30);
    return c.outcome();
  });

  run("7 2D-DUP", [&] {
    Timer t;
    Checks c;
    const EvalResult d2 = attack(desk, AttackKind::TwoDDup);
    const auto cd = evals.find(run_name(AttackKind::Cdup, desk.attack.targets));
    if (cd == evals.end()) throw Error("C-DUP evaluation missing");
    c.expect(constant(d2.stream.all.target) && constant(d2.stream.all.nontarget) &&
                 constant(d2.clips.rates.target) && constant(d2.clips.rates.nontarget),
             "2D-DUP rates constant across offsets");
    const double gap = std::fabs(d2.stream.all.target_mean - cd->second.stream.all.target_mean);
    c.note(fmt("appearance target: 2D %.3f", d2.stream.all.target_mean) +
           fmt(" vs C-DUP %.3f", cd->second.stream.all.target_mean));
    c.expect(gap <= 0.10, "|2D - C-DUP| <= 0.10 on the appearance-cued target");

    const EvalResult cd_t = attack(temporal, AttackKind::Cdup);
    const EvalResult d2_t = attack(temporal, AttackKind::TwoDDup);
    c.note(fmt("oscillate target: 2D %.3f", d2_t.stream.all.target_mean) +
           fmt(" vs C-DUP %.3f", cd_t.stream.all.target_mean));
    c.expect(constant(d2_t.stream.all.target), "2D-DUP oscillate rates constant");
    c.expect(d2_t.stream.all.target_mean <= cd_t.stream.all.target_mean, "2D <= C-DUP on the temporal target");
    expect_budget(c, t, 30);
    return c.outcome();
  });

  run("8 reproducibility", [&] {
    Checks c;
    // Re-run every evaluation stage and the boundary study on the same artifacts.
    const auto before = read_csvs(desk.output_dir);
    for (const ExperimentConfig* cfg : {&desk, &temporal}) {
      for (AttackKind k : trained_attacks(*cfg)) run_eval(*cfg, k, opts);
    }
    run_boundary(desk, opts);
    const auto after = read_csvs(desk.output_dir);
    std::size_t same = 0;
    for (const auto& [path, bytes] : before) same += after.count(path) && after.at(path) == bytes;
    c.note(std::to_string(same) + "/" + std::to_string(before.size()) + " CSVs identical after re-evaluation");
    c.expect(before.size() >= 6 * 6 + 3 && same == before.size() && after.size() == before.size(),
             "re-evaluation reproduces every CSV");

    // The whole recipe twice from scratch with a shortened attack schedule.
    std::map<fs::path, std::string> runs[2];
    for (int r = 0; r < 2; ++r) {
      ExperimentConfig cfg = desk;
      cfg.output_dir = work / ("repro_" + std::to_string(r));
      cfg.attack.schedule.steps = 150;
      run_data(cfg, opts);
      run_train_classifier(cfg, opts);
      for (AttackKind k : {AttackKind::Dup, AttackKind::Cdup}) {
        run_train_attack(cfg, k, opts);
        run_eval(cfg, k, opts);
      }
      runs[r] = read_csvs(cfg.output_dir);
    }
    c.note(std::to_string(runs[0].size()) + " CSVs compared across two fresh runs");
    c.expect(!runs[0].empty() && runs[0] == runs[1], "fresh re-run reproduces every CSV");
    return c.outcome();
  });

  std::printf("\n== acceptance summary\n");
  int failed = 0;
  for (const auto& [name, o] : results) {
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
  return failed ? 1 : 0;
}
