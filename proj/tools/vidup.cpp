// vidup: dataset -> classifier -> attack -> evaluation -> figures.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vidup/errors.hpp"
#include "vidup/experiment.hpp"

using namespace vidup;

namespace {

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string kind;
};

ExperimentConfig resolve(const Args& a) {
  ExperimentConfig c = load_experiment_config(a.config);
  if (!a.out.empty()) c.output_dir = a.out;
  if (a.seed) c.seed = *a.seed;
  return c;
}

std::vector<AttackKind> selected_kinds(const Args& a, const ExperimentConfig& c) {
  if (!a.kind.empty()) return {parse_attack_kind(a.kind)};
  auto kinds = trained_attacks(c);
  if (kinds.empty()) {
    throw MissingArtifactError("no trained attack under " + (c.output_dir / "attacks").string() +
                               " for the configured targets; run train-attack first");
  }
  return kinds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal adversarial perturbations against sliding-window video classifiers"};
  app.require_subcommand(1);
  app.fallthrough();
  Args a;
  app.add_option("--config", a.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--out", a.out, "output directory (overrides output_dir)");
  app.add_option("--seed", a.seed, "global seed (overrides seed)");
  app.add_flag("--force", a.force, "overwrite existing stage outputs");

  const std::vector<std::string> kinds{"up", "dup", "cdup", "2ddup"};
  auto* data = app.add_subcommand("data", "render the synthetic dataset and evaluation streams");
  auto* train_cls = app.add_subcommand("train-classifier", "train the video classifier");
  auto* train_att = app.add_subcommand("train-attack", "train a perturbation generator");
  train_att->add_option("--kind", a.kind, "attack kind")->required()->check(CLI::IsMember(kinds));
  auto* eval = app.add_subcommand("eval", "per-offset attack success on the evaluation stream and test clips");
  eval->add_option("--kind", a.kind, "attack kind (default: every trained attack)")->check(CLI::IsMember(kinds));
  auto* boundary = app.add_subcommand("boundary", "boundary-effect study with per-clip iterative attacks");
  auto* render = app.add_subcommand("render-perturbation", "write a trained perturbation as PNG images");
  render->add_option("--kind", a.kind, "attack kind (default: every trained attack)")->check(CLI::IsMember(kinds));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return static_cast<int>(ExitCode::Config);
  }

  try {
    const ExperimentConfig cfg = resolve(a);
    StageOptions opts;
    opts.force = a.force;
    opts.log = [](const std::string& msg) { std::cout << msg << (msg.ends_with('\n') ? "" : "\n") << std::flush; };

    if (data->parsed()) {
      run_data(cfg, opts);
    } else if (train_cls->parsed()) {
      run_train_classifier(cfg, opts);
    } else if (train_att->parsed()) {
      run_train_attack(cfg, parse_attack_kind(a.kind), opts);
    } else if (eval->parsed()) {
      for (AttackKind k : selected_kinds(a, cfg)) {
        std::cout << "== " << run_name(k, cfg.attack.targets) << "\n";
        run_eval(cfg, k, opts);
      }
    } else if (boundary->parsed()) {
      const BoundaryResult r = run_boundary(cfg, opts);
      std::printf("mean correlation at |offset| >= 4: %.4f\n", r.correlation.mean_at_distance(4));
      std::printf("mismatch success o=0 %.4f, o=w/2 %.4f, o=w-1 %.4f\n", r.mismatch.front(),
                  r.mismatch[r.mismatch.size() / 2], r.mismatch.back());
    } else if (render->parsed()) {
      for (AttackKind k : selected_kinds(a, cfg)) run_render(cfg, k, opts);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
