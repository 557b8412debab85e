#include "linpo/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>

#include "linpo/jsonio.hpp"
#include "linpo/parallel.hpp"

namespace fs = std::filesystem;

namespace linpo {

namespace {
constexpr const char* kCodeVersion = "linpo 0.1.0";
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("config: seeds list is empty");
  if (k_grid.empty()) throw std::invalid_argument("config: K grid is empty");
  for (std::size_t i = 0; i + 1 < k_grid.size(); ++i)
    if (k_grid[i] >= k_grid[i + 1])
      throw std::invalid_argument("config: K grid must be strictly increasing");
  for (int k : k_grid)
    if (k < 0) throw std::invalid_argument("config: K must be nonnegative");
  if (instance.kind != "lowrank" && instance.kind != "file")
    throw std::invalid_argument("config: unknown instance kind " + instance.kind);
  if (!(algo.eps_cov > 0.0 && algo.eps_cov <= 1.0))
    throw std::invalid_argument("config: eps_cov must be in (0,1]");
  if (algo.warmup_budget < 0) throw std::invalid_argument("config: warmup budget < 0");
  if (output_dir.empty()) throw std::invalid_argument("config: output_dir is empty");
}

nlohmann::json ExperimentConfig::to_json() const {
  json j;
  j["instance"] = {{"kind", instance.kind},       {"feature_dim", instance.feature_dim},
                   {"num_states", instance.num_states}, {"num_actions", instance.num_actions},
                   {"horizon", instance.horizon}, {"seed", instance.seed},
                   {"path", instance.path}};
  j["mode"] = to_string(mode);
  j["k_grid"] = k_grid;
  j["seeds"] = seeds;
  j["algo"] = {{"eta", algo.eta},
               {"beta", algo.beta},
               {"theory_mode", algo.theory_mode},
               {"eps_cov", algo.eps_cov},
               {"delta", algo.delta},
               {"warmup_budget", algo.warmup_budget},
               {"warmup_oracle_dynamics", algo.warmup_oracle_dynamics},
               {"explore_bonus", algo.explore_bonus}};
  j["loss"] = {{"seed", loss.seed},
               {"scale", loss.scale},
               {"noise_width", loss.noise_width},
               {"block_len", loss.block_len},
               {"bias_weight", loss.bias_weight}};
  j["output_dir"] = output_dir;
  j["parallel"] = parallel;
  j["diagnostics"] = diagnostics;
  j["coverage_probe_policies"] = coverage_probe_policies;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("instance")) {
    const json& i = j.at("instance");
    if (i.contains("kind")) cfg.instance.kind = i.at("kind").get<std::string>();
    if (i.contains("feature_dim")) cfg.instance.feature_dim = i.at("feature_dim").get<int>();
    if (i.contains("num_states")) cfg.instance.num_states = i.at("num_states").get<int>();
    if (i.contains("num_actions")) cfg.instance.num_actions = i.at("num_actions").get<int>();
    if (i.contains("horizon")) cfg.instance.horizon = i.at("horizon").get<int>();
    if (i.contains("seed")) cfg.instance.seed = i.at("seed").get<std::uint64_t>();
    if (i.contains("path")) cfg.instance.path = i.at("path").get<std::string>();
  }
  if (j.contains("mode")) cfg.mode = feedback_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("k_grid")) cfg.k_grid = j.at("k_grid").get<std::vector<int>>();
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("algo")) {
    const json& a = j.at("algo");
    if (a.contains("eta")) cfg.algo.eta = a.at("eta").get<double>();
    if (a.contains("beta")) cfg.algo.beta = a.at("beta").get<double>();
    if (a.contains("theory_mode")) cfg.algo.theory_mode = a.at("theory_mode").get<bool>();
    if (a.contains("eps_cov")) cfg.algo.eps_cov = a.at("eps_cov").get<double>();
    if (a.contains("delta")) cfg.algo.delta = a.at("delta").get<double>();
    if (a.contains("warmup_budget")) cfg.algo.warmup_budget = a.at("warmup_budget").get<int>();
    if (a.contains("warmup_oracle_dynamics"))
      cfg.algo.warmup_oracle_dynamics = a.at("warmup_oracle_dynamics").get<bool>();
    if (a.contains("explore_bonus")) cfg.algo.explore_bonus = a.at("explore_bonus").get<double>();
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    if (l.contains("seed")) cfg.loss.seed = l.at("seed").get<std::uint64_t>();
    if (l.contains("scale")) cfg.loss.scale = l.at("scale").get<double>();
    if (l.contains("noise_width")) cfg.loss.noise_width = l.at("noise_width").get<double>();
    if (l.contains("block_len")) cfg.loss.block_len = l.at("block_len").get<int>();
    if (l.contains("bias_weight")) cfg.loss.bias_weight = l.at("bias_weight").get<double>();
  }
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("parallel")) cfg.parallel = j.at("parallel").get<bool>();
  if (j.contains("diagnostics")) cfg.diagnostics = j.at("diagnostics").get<bool>();
  if (j.contains("coverage_probe_policies"))
    cfg.coverage_probe_policies = j.at("coverage_probe_policies").get<int>();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return ExperimentConfig::from_json(json::parse(read_text_file(path)));
}

std::string output_root() {
  const char* env = std::getenv("LINPO_OUT_ROOT");
  return env != nullptr && *env != '\0' ? env : ".";
}

std::string resolve_output_dir(const std::string& dir) {
  fs::path p(dir);
  if (p.is_absolute()) return p.string();
  return (fs::path(output_root()) / p).string();
}

LossModel BuiltEnvironment::losses_for(int num_episodes) const {
  if (losses.mode == FeedbackMode::stochastic_bandit) return losses;
  LossModel out;
  out.mode = losses.mode;
  out.noise = losses.noise;
  if (num_episodes > losses.schedule_length())
    throw std::invalid_argument("requested episodes exceed the built schedule");
  out.loss_vectors.assign(losses.loss_vectors.begin(),
                          losses.loss_vectors.begin() + num_episodes);
  return out;
}

BuiltEnvironment build_environment(const ExperimentConfig& cfg) {
  BuiltEnvironment env;
  if (cfg.instance.kind == "file") {
    auto [mdp, losses] = instance_from_json(json::parse(read_text_file(cfg.instance.path)));
    env.mdp = std::move(mdp);
    env.losses = std::move(losses);
  } else {
    env.mdp = random_lowrank_mdp(cfg.instance.feature_dim, cfg.instance.num_states,
                                 cfg.instance.num_actions, cfg.instance.horizon,
                                 cfg.instance.seed);
    env.losses.mode = cfg.mode;
    if (cfg.mode == FeedbackMode::stochastic_bandit) {
      env.losses.loss_vectors.push_back(
          make_stochastic_loss(env.mdp, cfg.loss.seed, cfg.loss.scale));
      env.losses.noise.enabled = cfg.loss.noise_width > 0.0;
      env.losses.noise.width = cfg.loss.noise_width;
    } else {
      const int max_k = *std::max_element(cfg.k_grid.begin(), cfg.k_grid.end());
      env.losses.loss_vectors = make_adversarial_schedule(
          env.mdp, std::max(max_k, 1), cfg.loss.seed, cfg.loss.block_len,
          cfg.loss.bias_weight, cfg.loss.scale);
    }
  }
  env.instance_json = instance_to_json(env.mdp, env.losses);
  const ValidationReport report = validate_instance(env.mdp, env.losses);
  if (!report.passed())
    throw std::runtime_error("built instance failed validation:\n" + report.summary());
  return env;
}

namespace {

double resolved_run_beta(const ExperimentConfig& cfg, const BuiltEnvironment& env, int K) {
  RunConfig rc;
  rc.num_episodes = K;
  rc.beta = cfg.algo.beta;
  rc.delta = cfg.algo.delta;
  rc.theory_mode = cfg.algo.theory_mode;
  return rc.resolved_beta(env.mdp.feature_dim, env.mdp.horizon);
}

}  // namespace

WarmupArtifacts warmup_with_cache(const BuiltEnvironment& env, const ExperimentConfig& cfg,
                                  std::uint64_t seed, const std::string& cache_dir,
                                  bool* cache_hit) {
  // Key: instance, warmup parameters, seed. Beta matters because it sets the
  // coverage tolerance gamma.
  const double beta = resolved_run_beta(cfg, env, cfg.k_grid.back());
  json key;
  key["instance"] = env.instance_json;
  key["beta"] = beta;
  key["eps_cov"] = cfg.algo.eps_cov;
  key["delta"] = cfg.algo.delta;
  key["budget"] = cfg.algo.warmup_budget;
  key["oracle_dynamics"] = cfg.algo.warmup_oracle_dynamics;
  key["explore_bonus"] = cfg.algo.explore_bonus;
  key["seed"] = seed;
  const std::string hash = hash_hex(fnv1a_hash(key.dump()));
  const fs::path path = fs::path(cache_dir) / ("warmup_" + hash + ".json");

  if (fs::exists(path)) {
    if (cache_hit != nullptr) *cache_hit = true;
    return warmup_from_json(json::parse(read_text_file(path.string())));
  }
  if (cache_hit != nullptr) *cache_hit = false;

  WarmupConfig wcfg = WarmupConfig::make(cfg.algo.delta, beta, cfg.algo.eps_cov,
                                         cfg.algo.warmup_budget, env.mdp.horizon);
  wcfg.oracle_dynamics = cfg.algo.warmup_oracle_dynamics;
  wcfg.explore_bonus = cfg.algo.explore_bonus;
  const WarmupArtifacts fresh = reward_free_warmup(env.mdp, wcfg, seed, cfg.parallel);

  fs::create_directories(cache_dir);
  write_text_file(path.string(), warmup_to_json(fresh).dump());
  // Reload so cached and fresh paths replay bit-identically downstream.
  return warmup_from_json(json::parse(read_text_file(path.string())));
}

ScalingFit fit_scaling(const std::vector<double>& k_values,
                       const std::vector<double>& median_regrets) {
  if (k_values.size() != median_regrets.size())
    throw std::invalid_argument("fit_scaling: size mismatch");
  ScalingFit fit;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    if (median_regrets[i] <= 0.0) {
      std::ostringstream os;
      os << "excluding K=" << k_values[i] << ": nonpositive regret (log undefined)";
      fit.warnings.push_back(os.str());
      continue;
    }
    xs.push_back(std::log(k_values[i]));
    ys.push_back(std::log(median_regrets[i]));
  }
  fit.points_used = static_cast<int>(xs.size());
  if (fit.points_used < 3) {
    fit.warnings.push_back("fewer than 3 usable grid points; fit not computed");
    return fit;
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double ybar = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pred = fit.intercept + fit.slope * xs[i];
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - ybar) * (ys[i] - ybar);
  }
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double quartile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

std::string run_dir_name(int K, std::uint64_t seed) {
  std::ostringstream os;
  os << "K" << K << "_seed" << seed;
  return os.str();
}

struct RunOutput {
  RunSummary summary;
  std::string csv;
  json record_json;
  json diag_json;
};

RunOutput execute_one_run(const BuiltEnvironment& env, const ExperimentConfig& cfg, int K,
                          std::uint64_t seed, const std::string& cache_dir, bool parallel) {
  RunOutput out;
  out.summary.num_episodes = K;
  out.summary.seed = seed;

  const WarmupArtifacts warmup = warmup_with_cache(env, cfg, seed, cache_dir);
  const LossModel losses = env.losses_for(K);

  RunConfig rc;
  rc.num_episodes = K;
  rc.eta = cfg.algo.eta;
  rc.beta = cfg.algo.beta;
  rc.eps_cov = cfg.algo.eps_cov;
  rc.delta = cfg.algo.delta;
  rc.mode = cfg.mode;
  rc.seed = seed;
  rc.theory_mode = cfg.algo.theory_mode;

  const RunRecord record = run(env.mdp, losses, warmup, rc);
  const RegretSeries series = regret_series(record, env.mdp, losses, parallel);

  out.summary.final_regret = series.final_cumulative();
  out.summary.warmup_regret = warmup_phase_regret(warmup, env.mdp, losses, parallel);
  out.summary.warmup_episodes = record.warmup_episodes;
  out.summary.warmup_warning = record.warmup_warning;
  out.summary.assertions_ok = record.all_assertions_passed();

  // Per-episode CSV.
  std::ostringstream csv;
  csv << "episode,value_of_agent_policy,value_of_comparator,instant_regret,"
         "cumulative_regret,epochs_triggered,max_bonus,known_fraction_visited\n";
  std::vector<int> epochs_at(static_cast<std::size_t>(std::max(K, 1)), 0);
  for (const auto& e : record.epoch_events) ++epochs_at[static_cast<std::size_t>(e.episode)];
  for (int k = 0; k < K; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    csv << k << ',' << format_double(series.agent_value[ks]) << ','
        << format_double(series.comparator_value[ks]) << ','
        << format_double(series.instant[ks]) << ',' << format_double(series.cumulative[ks])
        << ',' << epochs_at[ks] << ',' << format_double(record.episode_diags[ks].max_bonus)
        << ',' << format_double(record.episode_diags[ks].known_fraction_visited) << '\n';
  }
  out.csv = csv.str();
  out.record_json = run_record_to_json(record);

  if (cfg.diagnostics) {
    const KnownSetOracle oracle(env.mdp, warmup,
                                rc.resolved_beta(env.mdp.feature_dim, env.mdp.horizon));
    const DecompositionDiag diag =
        decomposition_diag(record, env.mdp, losses, oracle, parallel);
    const OmdCheckResult omd = check_omd_regret(record, env.mdp, parallel);
    out.summary.good_event_ok = diag.good_event.all_ok();
    out.summary.bound_holds = diag.bound_holds;
    out.summary.omd_violations = omd.violations;
    out.diag_json = diag.to_json();
    out.diag_json["omd_check"] = {{"states_checked", omd.states_checked},
                                  {"states_skipped", omd.states_skipped},
                                  {"violations", omd.violations},
                                  {"worst_margin", omd.worst_margin}};
    if (omd.violations > 0) out.summary.assertions_ok = false;
  }
  return out;
}

json summary_to_json(const RunSummary& s) {
  return json{{"num_episodes", s.num_episodes},
              {"seed", s.seed},
              {"final_regret", s.final_regret},
              {"warmup_regret", s.warmup_regret},
              {"warmup_episodes", s.warmup_episodes},
              {"warmup_warning", s.warmup_warning},
              {"assertions_ok", s.assertions_ok},
              {"good_event_ok", s.good_event_ok},
              {"bound_holds", s.bound_holds},
              {"omd_violations", s.omd_violations},
              {"failed", s.failed},
              {"error", s.error}};
}

RunSummary summary_from_json(const json& j) {
  RunSummary s;
  s.num_episodes = j.at("num_episodes").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.final_regret = j.at("final_regret").get<double>();
  s.warmup_regret = j.at("warmup_regret").get<double>();
  s.warmup_episodes = j.at("warmup_episodes").get<int>();
  s.warmup_warning = j.at("warmup_warning").get<bool>();
  s.assertions_ok = j.at("assertions_ok").get<bool>();
  s.good_event_ok = j.at("good_event_ok").get<bool>();
  s.bound_holds = j.at("bound_holds").get<bool>();
  s.omd_violations = j.at("omd_violations").get<int>();
  s.failed = j.at("failed").get<bool>();
  s.error = j.at("error").get<std::string>();
  return s;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const BuiltEnvironment env = build_environment(cfg);

  const fs::path dir = resolve_output_dir(cfg.output_dir);
  const fs::path runs_dir = dir / "runs";
  const fs::path cache_dir = dir / "warmup_cache";
  fs::create_directories(runs_dir);
  fs::create_directories(cache_dir);

  struct Task {
    int K;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (int K : cfg.k_grid)
    for (std::uint64_t seed : cfg.seeds) tasks.push_back({K, seed});

  // Warmup artifacts are per-seed; populate the cache serially first so the
  // worker pool only ever reads it.
  for (std::uint64_t seed : cfg.seeds)
    (void)warmup_with_cache(env, cfg, seed, cache_dir.string());

  std::vector<RunOutput> outputs(tasks.size());
  // Worker pool over runs; each worker owns its run state and all file
  // output happens below on one thread.
  parallel_for(static_cast<long>(tasks.size()), cfg.parallel, [&](long i) {
    const auto& t = tasks[static_cast<std::size_t>(i)];
    auto& out = outputs[static_cast<std::size_t>(i)];
    try {
      out = execute_one_run(env, cfg, t.K, t.seed, cache_dir.string(), false);
    } catch (const std::exception& e) {
      out.summary.num_episodes = t.K;
      out.summary.seed = t.seed;
      out.summary.failed = true;
      out.summary.assertions_ok = false;
      out.summary.error = e.what();
    }
  });

  ExperimentResult result;
  result.dir = dir.string();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& out = outputs[i];
    const fs::path rdir = runs_dir / run_dir_name(tasks[i].K, tasks[i].seed);
    fs::create_directories(rdir);
    write_text_file((rdir / "summary.json").string(), summary_to_json(out.summary).dump(2));
    if (!out.summary.failed) {
      write_text_file((rdir / "run.csv").string(), out.csv);
      write_text_file((rdir / "record.json").string(), out.record_json.dump());
      if (!out.diag_json.is_null())
        write_text_file((rdir / "decomposition.json").string(), out.diag_json.dump(2));
    }
    result.runs.push_back(out.summary);
    result.all_ok = result.all_ok && out.summary.assertions_ok && !out.summary.failed;
  }

  // Median regret per K and the scaling fit.
  if (cfg.k_grid.size() >= 3) {
    std::vector<double> ks, medians;
    for (int K : cfg.k_grid) {
      std::vector<double> finals;
      for (const auto& s : result.runs)
        if (s.num_episodes == K && !s.failed) finals.push_back(s.final_regret);
      if (!finals.empty()) {
        ks.push_back(K);
        medians.push_back(median(finals));
      }
    }
    result.fit = fit_scaling(ks, medians);
  }

  json manifest;
  manifest["code_version"] = kCodeVersion;
  manifest["config"] = cfg.to_json();
  manifest["config_hash"] = hash_hex(fnv1a_hash(cfg.to_json().dump()));
  manifest["resolved_defaults"] = {
      {"beta", resolved_run_beta(cfg, env, cfg.k_grid.back())},
      {"eta_at_max_k",
       cfg.algo.eta > 0.0
           ? cfg.algo.eta
           : default_eta(env.mdp.num_actions, env.mdp.horizon, cfg.k_grid.back())}};
  manifest["timestamp"] =
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  json run_index = json::array();
  for (std::size_t i = 0; i < tasks.size(); ++i)
    run_index.push_back({{"dir", "runs/" + run_dir_name(tasks[i].K, tasks[i].seed)},
                         {"K", tasks[i].K},
                         {"seed", tasks[i].seed},
                         {"failed", outputs[i].summary.failed}});
  manifest["runs"] = std::move(run_index);
  if (result.fit.has_value())
    manifest["scaling_fit"] = {{"slope", result.fit->slope},
                               {"intercept", result.fit->intercept},
                               {"r_squared", result.fit->r_squared},
                               {"points_used", result.fit->points_used},
                               {"warnings", result.fit->warnings}};
  write_text_file((dir / "manifest.json").string(), manifest.dump(2));
  write_text_file((dir / "instance.json").string(), env.instance_json.dump());
  return result;
}

namespace {

std::vector<std::pair<std::string, RunSummary>> load_summaries(const std::string& artifact_dir,
                                                               std::vector<std::string>* warnings) {
  std::vector<std::pair<std::string, RunSummary>> out;
  const fs::path manifest_path = fs::path(artifact_dir) / "manifest.json";
  if (!fs::exists(manifest_path)) {
    if (warnings != nullptr) warnings->push_back("missing manifest.json");
    return out;
  }
  const json manifest = json::parse(read_text_file(manifest_path.string()));
  for (const json& r : manifest.at("runs")) {
    const fs::path rdir = fs::path(artifact_dir) / r.at("dir").get<std::string>();
    const fs::path spath = rdir / "summary.json";
    if (!fs::exists(spath)) {
      if (warnings != nullptr)
        warnings->push_back("missing run summary: " + rdir.string());
      continue;
    }
    out.push_back({rdir.string(), summary_from_json(json::parse(read_text_file(spath.string())))});
  }
  return out;
}

}  // namespace

ScalingFit fit_from_artifacts(const std::string& artifact_dir) {
  std::vector<std::string> warnings;
  const auto summaries = load_summaries(artifact_dir, &warnings);
  std::map<int, std::vector<double>> by_k;
  for (const auto& [dir, s] : summaries)
    if (!s.failed) by_k[s.num_episodes].push_back(s.final_regret);
  std::vector<double> ks, medians;
  for (const auto& [K, finals] : by_k) {
    ks.push_back(K);
    medians.push_back(median(finals));
  }
  ScalingFit fit = fit_scaling(ks, medians);
  fit.warnings.insert(fit.warnings.begin(), warnings.begin(), warnings.end());
  return fit;
}

std::vector<std::string> emit_plotdata(const std::string& artifact_dir) {
  std::vector<std::string> warnings;
  const auto summaries = load_summaries(artifact_dir, &warnings);
  const fs::path plots = fs::path(artifact_dir) / "plots";
  fs::create_directories(plots);

  std::ostringstream curves, medians, bonus, epochs, coverage;
  curves << "K,seed,episode,instant_regret,cumulative_regret\n";
  medians << "K,median_final_regret,q25,q75,runs\n";
  bonus << "K,seed,episode,max_bonus,known_fraction_visited\n";
  epochs << "K,seed,h,epoch_index,episode,log_det\n";
  coverage << "K,seed,warmup_episodes,warmup_warning,warmup_regret\n";

  std::map<int, std::vector<double>> by_k;
  for (const auto& [rdir, s] : summaries) {
    if (s.failed) {
      warnings.push_back("skipping failed run: " + rdir);
      continue;
    }
    by_k[s.num_episodes].push_back(s.final_regret);
    coverage << s.num_episodes << ',' << s.seed << ',' << s.warmup_episodes << ','
             << (s.warmup_warning ? 1 : 0) << ',' << format_double(s.warmup_regret) << '\n';

    const fs::path csv_path = fs::path(rdir) / "run.csv";
    if (fs::exists(csv_path)) {
      std::istringstream in(read_text_file(csv_path.string()));
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() < 8) continue;
        curves << s.num_episodes << ',' << s.seed << ',' << cells[0] << ',' << cells[3] << ','
               << cells[4] << '\n';
        bonus << s.num_episodes << ',' << s.seed << ',' << cells[0] << ',' << cells[6] << ','
              << cells[7] << '\n';
      }
    } else {
      warnings.push_back("missing run.csv: " + rdir);
    }

    const fs::path record_path = fs::path(rdir) / "record.json";
    if (fs::exists(record_path)) {
      const json record = json::parse(read_text_file(record_path.string()));
      for (const json& e : record.at("epoch_events"))
        epochs << s.num_episodes << ',' << s.seed << ',' << e.at("h").get<int>() << ','
               << e.at("index").get<int>() << ',' << e.at("episode").get<int>() << ','
               << format_double(e.at("log_det").get<double>()) << '\n';
    }
  }
  for (const auto& [K, finals] : by_k)
    medians << K << ',' << format_double(median(finals)) << ','
            << format_double(quartile(finals, 0.25)) << ','
            << format_double(quartile(finals, 0.75)) << ',' << finals.size() << '\n';

  write_text_file((plots / "regret_curves.csv").string(), curves.str());
  write_text_file((plots / "regret_medians.csv").string(), medians.str());
  write_text_file((plots / "bonus_decay.csv").string(), bonus.str());
  write_text_file((plots / "epoch_events.csv").string(), epochs.str());
  write_text_file((plots / "coverage_probes.csv").string(), coverage.str());
  return warnings;
}

}  // namespace linpo
