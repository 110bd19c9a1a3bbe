// Batch front-end for the episodic safe-learning stack: single runs,
// timing benchmarks, the safety-mode ablation, the aggregated safety table
// and checkpoint evaluation from custom initial states.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>

#include "safelearn/safelearn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using safelearn::ordered_json;

namespace {

struct RunFlags {
  std::string config_file;
  std::string env, model, safety;
  int episodes = -1;
  int steps = 0;
  std::int64_t seed = -1;
  std::string out;
  int horizon = 0, rollouts = 0;
  double alpha = -1, delta = -1, gamma = -1, ridge = -1;
  int features = 0;
  int acp_window = 0;
  double acp_prior = -1;
  bool acp_reset = false;
  bool filter_mean = false;
};

void add_run_options(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON run configuration file");
  cmd->add_option("--env", f.env, "environment preset: integrator|pendulum");
  cmd->add_option("--model", f.model, "surrogate model: gp|rff|qff");
  cmd->add_option("--safety", f.safety, "safety mode: none|cbf|cbf-acp");
  cmd->add_option("--episodes", f.episodes, "training episodes T");
  cmd->add_option("--steps", f.steps, "steps per episode K (0: environment preset)");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--horizon", f.horizon, "MPPI horizon");
  cmd->add_option("--rollouts", f.rollouts, "MPPI rollout count");
  cmd->add_option("--alpha", f.alpha, "ACP target failure probability");
  cmd->add_option("--delta", f.delta, "ACP learning rate");
  cmd->add_option("--gamma", f.gamma, "barrier decay in (0,1]");
  cmd->add_option("--ridge", f.ridge, "ridge regularizer");
  cmd->add_option("--features", f.features, "requested feature count P");
  cmd->add_option("--acp-window", f.acp_window, "score window (0: episode length)");
  cmd->add_option("--acp-prior", f.acp_prior, "quantile fallback before calibration");
  cmd->add_flag("--acp-reset-per-episode", f.acp_reset, "reset ACP state per episode");
  cmd->add_flag("--filter-uses-mean", f.filter_mean,
                "filter with the posterior mean instead of the sampled weights");
}

safelearn::RunConfig build_config(const CLI::App* cmd, const RunFlags& f) {
  safelearn::RunConfig cfg;
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    if (!in) throw CLI::ValidationError("--config", "cannot read " + f.config_file);
    json j;
    in >> j;
    cfg = safelearn::run_config_from_json(j);
  }
  if (cmd->count("--env")) cfg.env_name = f.env;
  if (cmd->count("--model")) cfg.model = safelearn::model_kind_from_string(f.model);
  if (cmd->count("--safety")) cfg.safety = safelearn::safety_mode_from_string(f.safety);
  if (cmd->count("--episodes")) cfg.episodes = f.episodes;
  if (cmd->count("--steps")) cfg.steps = f.steps > 0 ? f.steps : -1;
  if (cmd->count("--seed")) cfg.seed = static_cast<std::uint64_t>(f.seed);
  if (cmd->count("--out")) cfg.out_dir = f.out;
  if (cmd->count("--horizon")) cfg.mppi_horizon = f.horizon;
  if (cmd->count("--rollouts")) cfg.mppi_rollouts = f.rollouts;
  if (cmd->count("--alpha")) cfg.alpha_target = f.alpha;
  if (cmd->count("--delta")) cfg.learn_rate = f.delta;
  if (cmd->count("--gamma")) cfg.gamma = f.gamma;
  if (cmd->count("--ridge")) cfg.ridge = f.ridge;
  if (cmd->count("--features")) cfg.feature_count = f.features;
  if (cmd->count("--acp-window")) cfg.acp_window = f.acp_window > 0 ? f.acp_window : -1;
  if (cmd->count("--acp-prior")) cfg.acp_prior_radius = f.acp_prior;
  if (f.acp_reset) cfg.acp_reset_per_episode = true;
  if (f.filter_mean) cfg.filter_uses_mean = true;
  return cfg;
}

int cmd_run(const CLI::App* cmd, const RunFlags& flags) {
  safelearn::RunConfig cfg = build_config(cmd, flags);
  if (cfg.out_dir.empty()) throw CLI::ValidationError("--out", "output directory required");
  safelearn::TrainLog log = safelearn::train(cfg);
  safelearn::export_run(log, safelearn::make_env(cfg), cfg.out_dir);
  std::printf("run: env=%s model=%s safety=%s episodes=%d steps=%d seed=%llu\n",
              cfg.env_name.c_str(), safelearn::to_string(cfg.model).c_str(),
              safelearn::to_string(cfg.safety).c_str(), cfg.episodes, log.steps,
              static_cast<unsigned long long>(cfg.seed));
  std::printf("  min h overall: %.6g\n", log.min_h_overall);
  std::printf("  final test reward: %.6g (GT oracle %.6g)\n", log.test_rewards.back(),
              -log.oracle_cost);
  std::printf("  outputs in %s\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_bench_timing(const CLI::App* cmd, const RunFlags& flags) {
  safelearn::RunConfig base = build_config(cmd, flags);
  if (base.out_dir.empty()) throw CLI::ValidationError("--out", "output directory required");
  fs::create_directories(base.out_dir);
  base.fit_timing_repeats = 3;

  ordered_json out;
  std::vector<safelearn::Series> series;
  for (auto model : {safelearn::ModelKind::GP, safelearn::ModelKind::RFF,
                     safelearn::ModelKind::QFF}) {
    safelearn::RunConfig cfg = base;
    cfg.model = model;
    if (model == safelearn::ModelKind::GP && !cmd->count("--rollouts"))
      cfg.mppi_rollouts = 128;  // exact-GP prediction inside MPPI is the bottleneck
    safelearn::TrainLog log = safelearn::train(cfg);
    std::vector<double> fit_ms;
    for (const auto& ep : log.episodes) fit_ms.push_back(ep.fit_time_ms);
    const std::string name = safelearn::to_string(model);
    out[name] = {{"fit_time_ms", fit_ms},
                 {"data_count", log.data_count},
                 {"ratio_last_over_first", fit_ms.back() / std::max(1e-9, fit_ms.front())}};
    series.push_back({name, fit_ms});
    std::printf("bench-timing %-3s: episode-1 %.3f ms, episode-%zu %.3f ms, ratio %.2f\n",
                name.c_str(), fit_ms.front(), fit_ms.size(), fit_ms.back(),
                fit_ms.back() / std::max(1e-9, fit_ms.front()));
  }
  safelearn::write_text(fs::path(base.out_dir) / "timing.json", out.dump(2) + "\n");
  safelearn::plot_line_chart(series, "model fit time per episode [ms]",
                             fs::path(base.out_dir) / "fit_time.svg");
  return 0;
}

int cmd_ablation(const CLI::App* cmd, const RunFlags& flags, int seeds) {
  safelearn::RunConfig base = build_config(cmd, flags);
  if (base.out_dir.empty()) throw CLI::ValidationError("--out", "output directory required");
  fs::create_directories(base.out_dir);

  ordered_json out;
  for (auto mode : {safelearn::SafetyMode::None, safelearn::SafetyMode::CBF,
                    safelearn::SafetyMode::CBF_ACP}) {
    const std::string name = safelearn::to_string(mode);
    int unsafe_runs = 0;
    ordered_json per_seed = ordered_json::array();
    safelearn::TrainLog last;
    for (int s = 0; s < seeds; ++s) {
      safelearn::RunConfig cfg = base;
      cfg.safety = mode;
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      safelearn::TrainLog log = safelearn::train(cfg);
      if (log.min_h_overall < 0.0) ++unsafe_runs;
      per_seed.push_back({{"seed", cfg.seed}, {"min_h", log.min_h_overall}});
      last = std::move(log);
    }
    out[name] = {{"unsafe_runs", unsafe_runs}, {"seeds", seeds}, {"runs", per_seed}};
    safelearn::plot_paths(last, safelearn::make_env(base),
                          fs::path(base.out_dir) / ("paths_" + name + ".svg"));
    std::printf("ablation %-8s: %d of %d runs had a safety violation (min h < 0)\n",
                name.c_str(), unsafe_runs, seeds);
  }
  safelearn::write_text(fs::path(base.out_dir) / "ablation.json", out.dump(2) + "\n");
  return 0;
}

int cmd_table1(const CLI::App* cmd, const RunFlags& flags, int seeds) {
  safelearn::RunConfig base = build_config(cmd, flags);
  if (base.out_dir.empty()) throw CLI::ValidationError("--out", "output directory required");
  fs::create_directories(base.out_dir);
  base.safety = safelearn::SafetyMode::CBF_ACP;

  ordered_json table;
  std::printf("%-11s %-5s %12s %12s %8s\n", "env", "model", "min_h mean", "min_h std",
              "safe");
  for (const std::string env : {"integrator", "pendulum"}) {
    for (auto model : {safelearn::ModelKind::GP, safelearn::ModelKind::RFF,
                       safelearn::ModelKind::QFF}) {
      std::vector<double> mins;
      int safe_runs = 0;
      for (int s = 0; s < seeds; ++s) {
        safelearn::RunConfig cfg = base;
        cfg.env_name = env;
        cfg.model = model;
        cfg.seed = base.seed + static_cast<std::uint64_t>(s);
        if (model == safelearn::ModelKind::GP && !cmd->count("--rollouts"))
          cfg.mppi_rollouts = 128;
        else if (!cmd->count("--rollouts"))
          cfg.mppi_rollouts = 256;
        safelearn::TrainLog log = safelearn::train(cfg);
        mins.push_back(log.min_h_overall);
        if (log.min_h_overall > 0.0) ++safe_runs;
      }
      const double mean = std::accumulate(mins.begin(), mins.end(), 0.0) / mins.size();
      double var = 0.0;
      for (double v : mins) var += (v - mean) * (v - mean);
      const double stdev = std::sqrt(var / mins.size());
      const std::string name = safelearn::to_string(model);
      table[env][name] = {{"min_h", mins},
                          {"mean", mean},
                          {"std", stdev},
                          {"safe_runs", safe_runs},
                          {"seeds", seeds}};
      std::printf("%-11s %-5s %12.4f %12.4f %4d/%-3d\n", env.c_str(), name.c_str(), mean,
                  stdev, safe_runs, seeds);
    }
  }
  safelearn::write_text(fs::path(base.out_dir) / "table1.json", table.dump(2) + "\n");
  return 0;
}

int cmd_eval(const std::string& checkpoint_file, const std::string& inits_file,
             const CLI::App* cmd, const RunFlags& flags) {
  safelearn::RunConfig cfg = build_config(cmd, flags);
  if (cfg.out_dir.empty()) throw CLI::ValidationError("--out", "output directory required");
  fs::create_directories(cfg.out_dir);

  std::ifstream ck(checkpoint_file);
  if (!ck) throw CLI::ValidationError("--checkpoint", "cannot read " + checkpoint_file);
  json cj;
  ck >> cj;
  std::ifstream is(inits_file);
  if (!is) throw CLI::ValidationError("--inits", "cannot read " + inits_file);
  json inits;
  is >> inits;

  safelearn::Environment env = safelearn::make_env(cfg);
  safelearn::Hypothesis hyp;
  if (cj.at("type") == "linear") {
    auto model = std::make_shared<safelearn::LinearDynModel>(
        safelearn::LinearDynModel::from_json(cj));
    hyp = safelearn::make_linear_hypothesis(env, model->feature_map_ptr(),
                                            model->mean_weights());
  } else if (cj.at("type") == "gp") {
    safelearn::GpHyper hyper;
    hyper.lengthscales = safelearn::detail::vector_from_json(cj.at("lengthscales"));
    hyper.kernel_variance = cj.at("kernel_variance").get<double>();
    hyper.noise_variance = cj.at("noise_variance").get<double>();
    auto gp = std::make_shared<const safelearn::GpModel>(safelearn::GpModel::fit(
        safelearn::detail::matrix_from_json(cj.at("inputs")),
        safelearn::detail::matrix_from_json(cj.at("targets")), hyper));
    hyp = safelearn::make_gp_hypothesis(env, gp);
  } else {
    throw CLI::ValidationError("--checkpoint", "unknown checkpoint type");
  }

  const int steps = safelearn::resolved_steps(cfg, env);
  safelearn::MppiConfig mppi = safelearn::make_mppi_config(cfg, env);
  safelearn::TrainLog paths_log;
  paths_log.config = cfg;
  ordered_json out = ordered_json::array();
  for (std::size_t i = 0; i < inits.size(); ++i) {
    safelearn::Environment e = env;
    e.x0 = safelearn::detail::vector_from_json(inits.at(i));
    e.noise_std.setZero();
    mppi.seed = safelearn::mix_seed(cfg.seed, i);
    safelearn::AcpState acp = safelearn::AcpState::init(cfg.alpha_target, cfg.learn_rate,
                                                        std::max(1, steps));
    auto planner = hyp;
    safelearn::EpisodeResult er = safelearn::run_episode(
        e, planner, planner, acp,
        cfg.safety == safelearn::SafetyMode::None ? safelearn::SafetyMode::None
                                                  : safelearn::SafetyMode::CBF,
        mppi, steps, safelearn::mix_seed(cfg.seed, i, 1), static_cast<int>(i));
    er.log.episode = static_cast<int>(i);
    safelearn::export_episode_csv(er.log, env.state_dim, env.control_dim,
                                  fs::path(cfg.out_dir) /
                                      ("eval_path_" + std::to_string(i) + ".csv"));
    out.push_back({{"init", inits.at(i)},
                   {"min_h", er.log.min_h},
                   {"total_cost", er.log.total_cost},
                   {"final_state", safelearn::detail::vector_to_json(
                                       er.log.states.row(er.log.states.rows() - 1))}});
    std::printf("eval init %zu: min h %.4f, total cost %.4f\n", i, er.log.min_h,
                er.log.total_cost);
    paths_log.episodes.push_back(std::move(er.log));
  }
  safelearn::plot_paths(paths_log, env, fs::path(cfg.out_dir) / "eval_paths.svg");
  safelearn::write_text(fs::path(cfg.out_dir) / "eval_summary.json", out.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"episodic safe-learning control benchmark"};
  app.require_subcommand(1);

  RunFlags run_flags, bench_flags, abl_flags, t1_flags, eval_flags;
  int abl_seeds = 10, t1_seeds = 10;
  std::string eval_checkpoint, eval_inits;

  auto* run = app.add_subcommand("run", "train one configuration and export logs");
  add_run_options(run, run_flags);

  auto* bench = app.add_subcommand("bench-timing", "fit-time scaling across models");
  add_run_options(bench, bench_flags);

  auto* abl = app.add_subcommand("ablation", "compare safety modes over seeds");
  add_run_options(abl, abl_flags);
  abl->add_option("--seeds", abl_seeds, "number of seeds per mode");

  auto* t1 = app.add_subcommand("reproduce-table1",
                                "aggregate min-h safety table over models and envs");
  add_run_options(t1, t1_flags);
  t1->add_option("--seeds", t1_seeds, "number of seeds per cell");

  auto* ev = app.add_subcommand("eval", "roll out a checkpointed model from custom starts");
  add_run_options(ev, eval_flags);
  ev->add_option("--checkpoint", eval_checkpoint, "model checkpoint JSON")->required();
  ev->add_option("--inits", eval_inits, "JSON array of initial states")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run, run_flags);
    if (bench->parsed()) return cmd_bench_timing(bench, bench_flags);
    if (abl->parsed()) return cmd_ablation(abl, abl_flags, abl_seeds);
    if (t1->parsed()) return cmd_table1(t1, t1_flags, t1_seeds);
    if (ev->parsed()) return cmd_eval(eval_checkpoint, eval_inits, ev, eval_flags);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
