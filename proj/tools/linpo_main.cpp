// Command-line harness: validate instances, run warmup, single runs and
// seed sweeps, fit regret scaling, and emit plot-ready CSVs.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include "linpo/harness.hpp"
#include "linpo/jsonio.hpp"

namespace fs = std::filesystem;
using namespace linpo;

namespace {

int cmd_validate(const std::string& config_path, const std::string& instance_file) {
  LinearMdpInstance mdp;
  LossModel losses;
  if (!instance_file.empty()) {
    auto [m, l] = instance_from_json(json::parse(read_text_file(instance_file)));
    mdp = std::move(m);
    losses = std::move(l);
  } else {
    const ExperimentConfig cfg = load_config(config_path);
    BuiltEnvironment env = build_environment(cfg);  // validates internally too
    mdp = std::move(env.mdp);
    losses = std::move(env.losses);
  }
  const ValidationReport report = validate_instance(mdp, losses);
  std::fputs(report.summary().c_str(), stdout);
  std::printf("instance %s\n", report.passed() ? "VALID" : "INVALID");
  return report.passed() ? 0 : 1;
}

int cmd_warmup(const std::string& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  cfg.validate();
  const BuiltEnvironment env = build_environment(cfg);
  const fs::path dir = resolve_output_dir(cfg.output_dir);
  fs::create_directories(dir / "warmup_cache");

  int exit_code = 0;
  for (std::uint64_t seed : cfg.seeds) {
    bool hit = false;
    const WarmupArtifacts art =
        warmup_with_cache(env, cfg, seed, (dir / "warmup_cache").string(), &hit);
    RunConfig rc;
    rc.beta = cfg.algo.beta;
    rc.delta = cfg.algo.delta;
    rc.theory_mode = cfg.algo.theory_mode;
    rc.num_episodes = cfg.k_grid.back();
    const KnownSetOracle oracle(env.mdp, art,
                                rc.resolved_beta(env.mdp.feature_dim, env.mdp.horizon));
    const CoverageProbeResult probe = coverage_probe(
        env.mdp, env.losses, oracle, cfg.coverage_probe_policies, 0, seed, cfg.parallel);
    std::printf("seed %llu: %s, %d episodes used\n", static_cast<unsigned long long>(seed),
                hit ? "cache hit" : "computed", art.episodes_used);
    for (int h = 0; h < env.mdp.horizon; ++h) {
      std::printf("  h=%d episodes=%d uncovered_probe=%.6g known_fraction=%.3f%s\n", h,
                  art.episodes_per_step[static_cast<std::size_t>(h)],
                  probe.exact_max[static_cast<std::size_t>(h)], oracle.known_fraction(h),
                  art.budget_exhausted[static_cast<std::size_t>(h)] ? "  [budget warning]" : "");
      if (probe.exact_max[static_cast<std::size_t>(h)] > cfg.algo.eps_cov) exit_code = 1;
    }
  }
  return exit_code;
}

int run_and_report(ExperimentConfig cfg) {
  const ExperimentResult result = run_experiment(cfg);
  int failures = 0;
  for (const auto& s : result.runs) {
    if (s.failed) {
      std::printf("[FAIL] K=%d seed=%llu: %s\n", s.num_episodes,
                  static_cast<unsigned long long>(s.seed), s.error.c_str());
      ++failures;
      continue;
    }
    std::printf("[%s] K=%d seed=%llu regret=%.6g warmup_eps=%d%s%s\n",
                s.assertions_ok ? "ok" : "ASSERT", s.num_episodes,
                static_cast<unsigned long long>(s.seed), s.final_regret, s.warmup_episodes,
                s.warmup_warning ? " [warmup warning]" : "",
                s.good_event_ok ? "" : " [good-event failed]");
    if (!s.assertions_ok) ++failures;
  }
  if (result.fit.has_value()) {
    std::printf("scaling fit: slope=%.4f intercept=%.4f R2=%.4f (%d points)\n",
                result.fit->slope, result.fit->intercept, result.fit->r_squared,
                result.fit->points_used);
    for (const auto& w : result.fit->warnings) std::printf("  warning: %s\n", w.c_str());
  }
  std::printf("artifacts: %s\n", result.dir.c_str());
  return failures == 0 && result.all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optimistic policy optimization for finite linear MDPs"};
  app.require_subcommand(1);

  std::string config_path, instance_file, artifact_dir;
  int k_override = -1;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;

  auto* validate = app.add_subcommand("validate", "check instance invariants");
  validate->add_option("--config", config_path, "experiment config JSON");
  validate->add_option("--instance-file", instance_file, "serialized instance JSON");

  auto* warmup = app.add_subcommand("warmup", "run reward-free warmup and coverage probes");
  warmup->add_option("--config", config_path, "experiment config JSON")->required();

  auto* run_cmd = app.add_subcommand("run", "single (K, seed) run");
  run_cmd->add_option("--config", config_path, "experiment config JSON")->required();
  run_cmd->add_option("--episodes", k_override, "override episode count");
  run_cmd->add_option("--seed", seed_override, "override seed")
      ->each([&](const std::string&) { has_seed_override = true; });

  auto* sweep = app.add_subcommand("sweep", "full (K grid) x (seeds) sweep");
  sweep->add_option("--config", config_path, "experiment config JSON")->required();

  auto* fit = app.add_subcommand("fit", "scaling fit from artifact summaries");
  fit->add_option("--dir", artifact_dir, "artifact directory")->required();

  auto* emit = app.add_subcommand("emit-plots", "tidy plot CSVs from artifacts");
  emit->add_option("--dir", artifact_dir, "artifact directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      if (config_path.empty() && instance_file.empty())
        throw std::invalid_argument("validate needs --config or --instance-file");
      return cmd_validate(config_path, instance_file);
    }
    if (warmup->parsed()) return cmd_warmup(config_path);
    if (run_cmd->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      if (k_override >= 0) cfg.k_grid = {k_override};
      else cfg.k_grid = {cfg.k_grid.front()};
      if (has_seed_override) cfg.seeds = {seed_override};
      else cfg.seeds = {cfg.seeds.front()};
      return run_and_report(std::move(cfg));
    }
    if (sweep->parsed()) return run_and_report(load_config(config_path));
    if (fit->parsed()) {
      const ScalingFit f = fit_from_artifacts(artifact_dir);
      std::printf("slope=%.6f intercept=%.6f R2=%.6f points=%d\n", f.slope, f.intercept,
                  f.r_squared, f.points_used);
      for (const auto& w : f.warnings) std::printf("warning: %s\n", w.c_str());
      return f.points_used >= 3 ? 0 : 1;
    }
    if (emit->parsed()) {
      const auto warnings = emit_plotdata(artifact_dir);
      for (const auto& w : warnings) std::printf("warning: %s\n", w.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
