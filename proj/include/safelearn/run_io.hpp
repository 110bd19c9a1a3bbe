#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "safelearn/harness.hpp"

namespace safelearn {

using ordered_json = nlohmann::ordered_json;

/// Fixed float formatting for CSV golden files: 17 significant digits.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> episode_csv_header(int state_dim, int control_dim) {
  std::vector<std::string> cols;
  cols.emplace_back("k");
  for (int i = 0; i < state_dim; ++i) cols.push_back("x" + std::to_string(i));
  for (int i = 0; i < control_dim; ++i) cols.push_back("u_ref" + std::to_string(i));
  for (int i = 0; i < control_dim; ++i) cols.push_back("u_safe" + std::to_string(i));
  for (const char* c : {"cost", "h", "b_pred", "b_true", "score", "quantile", "alpha",
                        "e", "feasible", "margin", "deviation", "wall_ms"})
    cols.emplace_back(c);
  return cols;
}

inline void export_episode_csv(const EpisodeLog& log, int state_dim, int control_dim,
                               const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("export_episode_csv: cannot write " + file.string());
  const auto header = episode_csv_header(state_dim, control_dim);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
  for (const auto& s : log.steps) {
    out << s.k;
    for (int i = 0; i < state_dim; ++i) out << ',' << format_g17(s.x(i));
    for (int i = 0; i < control_dim; ++i) out << ',' << format_g17(s.u_ref(i));
    for (int i = 0; i < control_dim; ++i) out << ',' << format_g17(s.u_safe(i));
    out << ',' << format_g17(s.cost) << ',' << format_g17(s.h) << ','
        << format_g17(s.b_pred) << ',' << format_g17(s.b_true) << ','
        << format_g17(s.score) << ',' << format_g17(s.quantile) << ','
        << format_g17(s.alpha) << ',' << format_g17(s.e) << ','
        << (s.feasible ? 1 : 0) << ',' << format_g17(s.margin) << ','
        << format_g17(s.deviation) << ',' << format_g17(s.wall_ms) << '\n';
  }
}

inline std::vector<StepRecord> parse_episode_csv(const std::filesystem::path& file,
                                                 int state_dim, int control_dim) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("parse_episode_csv: cannot read " + file.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<StepRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    auto next = [&]() {
      std::getline(ss, cell, ',');
      return cell;
    };
    StepRecord r;
    r.k = std::stoi(next());
    r.x.resize(state_dim);
    for (int i = 0; i < state_dim; ++i) r.x(i) = std::stod(next());
    r.u_ref.resize(control_dim);
    for (int i = 0; i < control_dim; ++i) r.u_ref(i) = std::stod(next());
    r.u_safe.resize(control_dim);
    for (int i = 0; i < control_dim; ++i) r.u_safe(i) = std::stod(next());
    r.cost = std::stod(next());
    r.h = std::stod(next());
    r.b_pred = std::stod(next());
    r.b_true = std::stod(next());
    r.score = std::stod(next());
    r.quantile = std::stod(next());
    r.alpha = std::stod(next());
    r.e = std::stod(next());
    r.feasible = std::stoi(next()) != 0;
    r.margin = std::stod(next());
    r.deviation = std::stod(next());
    r.wall_ms = std::stod(next());
    rows.push_back(std::move(r));
  }
  return rows;
}

inline ordered_json run_config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["env"] = cfg.env_name;
  j["model"] = to_string(cfg.model);
  j["safety"] = to_string(cfg.safety);
  j["episodes"] = cfg.episodes;
  j["steps"] = cfg.steps;
  j["seed"] = cfg.seed;
  j["alpha_target"] = cfg.alpha_target;
  j["learn_rate"] = cfg.learn_rate;
  j["gamma"] = cfg.gamma;
  j["ridge"] = cfg.ridge;
  j["feature_count"] = cfg.feature_count;
  j["lengthscales"] = detail::vector_to_json(cfg.lengthscales);
  j["kernel_variance"] = cfg.kernel_variance;
  j["gp_noise_variance"] = cfg.gp_noise_variance;
  j["mppi_horizon"] = cfg.mppi_horizon;
  j["mppi_rollouts"] = cfg.mppi_rollouts;
  j["mppi_temperature"] = cfg.mppi_temperature;
  j["mppi_noise_frac"] = cfg.mppi_noise_frac;
  j["acp_window"] = cfg.acp_window;
  j["acp_prior_radius"] = cfg.acp_prior_radius;
  j["acp_reset_per_episode"] = cfg.acp_reset_per_episode;
  j["filter_uses_mean"] = cfg.filter_uses_mean;
  j["safe_dataset_steps"] = cfg.safe_dataset_steps;
  j["oracle_seeds"] = cfg.oracle_seeds;
  j["fit_timing_repeats"] = cfg.fit_timing_repeats;
  j["env_overrides"] = cfg.env_overrides.is_null() ? nlohmann::json::object()
                                                   : cfg.env_overrides;
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  if (j.contains("env")) cfg.env_name = j.at("env").get<std::string>();
  if (j.contains("model")) cfg.model = model_kind_from_string(j.at("model").get<std::string>());
  if (j.contains("safety"))
    cfg.safety = safety_mode_from_string(j.at("safety").get<std::string>());
  if (j.contains("episodes")) cfg.episodes = j.at("episodes").get<int>();
  if (j.contains("steps")) cfg.steps = j.at("steps").get<int>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("alpha_target")) cfg.alpha_target = j.at("alpha_target").get<double>();
  if (j.contains("learn_rate")) cfg.learn_rate = j.at("learn_rate").get<double>();
  if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
  if (j.contains("ridge")) cfg.ridge = j.at("ridge").get<double>();
  if (j.contains("feature_count")) cfg.feature_count = j.at("feature_count").get<int>();
  if (j.contains("lengthscales") && !j.at("lengthscales").empty())
    cfg.lengthscales = detail::vector_from_json(j.at("lengthscales"));
  if (j.contains("kernel_variance")) cfg.kernel_variance = j.at("kernel_variance").get<double>();
  if (j.contains("gp_noise_variance"))
    cfg.gp_noise_variance = j.at("gp_noise_variance").get<double>();
  if (j.contains("mppi_horizon")) cfg.mppi_horizon = j.at("mppi_horizon").get<int>();
  if (j.contains("mppi_rollouts")) cfg.mppi_rollouts = j.at("mppi_rollouts").get<int>();
  if (j.contains("mppi_temperature"))
    cfg.mppi_temperature = j.at("mppi_temperature").get<double>();
  if (j.contains("mppi_noise_frac")) cfg.mppi_noise_frac = j.at("mppi_noise_frac").get<double>();
  if (j.contains("acp_window")) cfg.acp_window = j.at("acp_window").get<int>();
  if (j.contains("acp_prior_radius"))
    cfg.acp_prior_radius = j.at("acp_prior_radius").get<double>();
  if (j.contains("acp_reset_per_episode"))
    cfg.acp_reset_per_episode = j.at("acp_reset_per_episode").get<bool>();
  if (j.contains("filter_uses_mean")) cfg.filter_uses_mean = j.at("filter_uses_mean").get<bool>();
  if (j.contains("safe_dataset_steps"))
    cfg.safe_dataset_steps = j.at("safe_dataset_steps").get<int>();
  if (j.contains("oracle_seeds")) cfg.oracle_seeds = j.at("oracle_seeds").get<int>();
  if (j.contains("fit_timing_repeats"))
    cfg.fit_timing_repeats = j.at("fit_timing_repeats").get<int>();
  if (j.contains("env_overrides")) cfg.env_overrides = j.at("env_overrides");
  return cfg;
}

/// Deterministic run summary: everything here is a pure function of config
/// and seed. Wall-clock times live in timing.json; the fit_time_ms keys are
/// kept in the schema with null values so the summary stays byte-stable
/// across reruns.
inline ordered_json summary_json(const TrainLog& log) {
  ordered_json j;
  j["config"] = run_config_to_json(log.config);
  j["steps_per_episode"] = log.steps;
  ordered_json eps = ordered_json::array();
  for (std::size_t t = 0; t < log.episodes.size(); ++t) {
    const auto& ep = log.episodes[t];
    ordered_json e;
    e["episode"] = ep.episode;
    e["min_h"] = ep.min_h;
    e["total_cost"] = ep.total_cost;
    e["test_reward"] = log.test_rewards.at(t);
    e["regret"] = log.regret.at(t);
    e["infeasible_events"] = ep.infeasible_events;
    e["aborted"] = ep.aborted;
    e["fit_time_ms"] = nullptr;
    eps.push_back(std::move(e));
  }
  j["episodes"] = std::move(eps);
  j["min_h_overall"] = log.min_h_overall;
  j["oracle_cost"] = log.oracle_cost;
  j["data_count"] = log.data_count;
  j["acp"] = {{"final_alpha", log.final_alpha}, {"final_quantile", log.final_quantile}};
  return j;
}

inline ordered_json timing_json(const TrainLog& log) {
  ordered_json j;
  ordered_json fit = ordered_json::array();
  ordered_json wall = ordered_json::array();
  for (const auto& ep : log.episodes) {
    fit.push_back(ep.fit_time_ms);
    double total = 0.0;
    for (const auto& s : ep.steps) total += s.wall_ms;
    wall.push_back(total);
  }
  j["fit_time_ms"] = std::move(fit);
  j["episode_wall_ms"] = std::move(wall);
  return j;
}

inline void write_text(const std::filesystem::path& file, const std::string& content) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_text: cannot write " + file.string());
  out << content;
}

}  // namespace safelearn

#include "safelearn/plots.hpp"

namespace safelearn {

/// Writes the full artifact set for one run: per-episode CSVs, the
/// deterministic summary, wall-clock timing, the final model checkpoint and
/// the figure set.
inline void export_run(const TrainLog& log, const Environment& env,
                       const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec && !std::filesystem::is_directory(dir))
    throw std::runtime_error("export_run: cannot create " + dir.string());
  for (const auto& ep : log.episodes)
    export_episode_csv(ep, env.state_dim, env.control_dim,
                       dir / ("episode_" + std::to_string(ep.episode) + ".csv"));
  write_text(dir / "summary.json", summary_json(log).dump(2) + "\n");
  write_text(dir / "timing.json", timing_json(log).dump(2) + "\n");
  write_text(dir / "model_final.json", log.checkpoint.dump() + "\n");
  emit_plots(log, env, dir);
}

}  // namespace safelearn
