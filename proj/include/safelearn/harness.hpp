#pragma once

#include <algorithm>
#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "safelearn/acp.hpp"
#include "safelearn/common.hpp"
#include "safelearn/dyn_model.hpp"
#include "safelearn/envs.hpp"
#include "safelearn/gp.hpp"
#include "safelearn/kernel_features.hpp"
#include "safelearn/mppi.hpp"
#include "safelearn/safety_filter.hpp"

namespace safelearn {

enum class ModelKind { GP, RFF, QFF };
enum class SafetyMode { None, CBF, CBF_ACP };

inline std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::GP: return "gp";
    case ModelKind::RFF: return "rff";
    default: return "qff";
  }
}

inline std::string to_string(SafetyMode s) {
  switch (s) {
    case SafetyMode::None: return "none";
    case SafetyMode::CBF: return "cbf";
    default: return "cbf-acp";
  }
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gp") return ModelKind::GP;
  if (s == "rff") return ModelKind::RFF;
  if (s == "qff") return ModelKind::QFF;
  throw std::invalid_argument("unknown model kind: " + s);
}

inline SafetyMode safety_mode_from_string(const std::string& s) {
  if (s == "none") return SafetyMode::None;
  if (s == "cbf") return SafetyMode::CBF;
  if (s == "cbf-acp") return SafetyMode::CBF_ACP;
  throw std::invalid_argument("unknown safety mode: " + s);
}

struct RunConfig {
  std::string env_name = "integrator";
  ModelKind model = ModelKind::QFF;
  SafetyMode safety = SafetyMode::CBF_ACP;
  int episodes = 10;
  int steps = -1;  // <0: environment preset (integrator 300, pendulum 150)
  std::uint64_t seed = 0;
  double alpha_target = 0.05;
  double learn_rate = 0.01;
  double gamma = 0.5;
  double ridge = 1.0;
  int feature_count = 200;
  Vec lengthscales;                // empty: environment preset
  double kernel_variance = -1.0;   // <0: environment preset
  double gp_noise_variance = -1.0; // <0: environment preset
  int mppi_horizon = -1;           // <0: environment preset
  int mppi_rollouts = 512;
  double mppi_temperature = -1.0;  // <0: environment preset
  double mppi_noise_frac = 0.2;  // exploration std as a fraction of control half-range
  int acp_window = -1;           // <0: one episode length
  double acp_prior_radius = 0.1;
  bool acp_reset_per_episode = false;
  bool filter_uses_mean = false;
  int safe_dataset_steps = 50;
  int oracle_seeds = 5;
  int fit_timing_repeats = 1;
  std::string out_dir;
  nlohmann::json env_overrides;

  void validate() const {
    require(episodes >= 1, "RunConfig: episodes must be >= 1");
    require(alpha_target > 0.0 && alpha_target < 1.0, "RunConfig: alpha_target in (0,1)");
    require(learn_rate > 0.0, "RunConfig: learn_rate must be positive");
    require(gamma > 0.0 && gamma <= 1.0, "RunConfig: gamma in (0,1]");
    require(ridge > 0.0, "RunConfig: ridge must be positive");
    require(feature_count >= 1, "RunConfig: feature_count must be >= 1");
    require(mppi_rollouts >= 1, "RunConfig: mppi_rollouts must be >= 1");
    require(mppi_noise_frac > 0.0, "RunConfig: mppi_noise_frac must be positive");
    require(safe_dataset_steps >= 1, "RunConfig: safe_dataset_steps must be >= 1");
    require(oracle_seeds >= 1, "RunConfig: oracle_seeds must be >= 1");
  }
};

namespace seed_tag {
constexpr std::uint64_t safe_data = 1;
constexpr std::uint64_t thompson = 2;
constexpr std::uint64_t plan = 3;
constexpr std::uint64_t env_noise = 4;
constexpr std::uint64_t eval = 5;
constexpr std::uint64_t oracle = 6;
}  // namespace seed_tag

// ---------------------------------------------------------------------------
// environment + hyperparameter presets

namespace detail {

template <typename T>
T json_or(const nlohmann::json& j, const char* key, T fallback) {
  if (j.is_object() && j.contains(key)) return j.at(key).get<T>();
  return fallback;
}

}  // namespace detail

inline Environment make_env(const RunConfig& cfg) {
  const auto& ov = cfg.env_overrides;
  if (cfg.env_name == "integrator") {
    IntegratorParams p;
    p.gamma = cfg.gamma;
    p.dt = detail::json_or(ov, "dt", p.dt);
    p.noise_std = detail::json_or(ov, "noise_std", p.noise_std);
    p.obstacle_radius = detail::json_or(ov, "obstacle_radius", p.obstacle_radius);
    p.control_limit = detail::json_or(ov, "control_limit", p.control_limit);
    p.residual_enabled = detail::json_or(ov, "residual_enabled", p.residual_enabled);
    if (ov.is_object() && ov.contains("x0"))
      p.x0 << ov.at("x0").at(0).get<double>(), ov.at("x0").at(1).get<double>();
    if (ov.is_object() && ov.contains("goal"))
      p.goal << ov.at("goal").at(0).get<double>(), ov.at("goal").at(1).get<double>();
    return make_integrator(p);
  }
  if (cfg.env_name == "pendulum") {
    PendulumParams p;
    p.gamma = cfg.gamma;
    p.dt = detail::json_or(ov, "dt", p.dt);
    p.noise_std = detail::json_or(ov, "noise_std", p.noise_std);
    p.mass_true = detail::json_or(ov, "mass_true", p.mass_true);
    p.length_true = detail::json_or(ov, "length_true", p.length_true);
    p.mass_nominal = detail::json_or(ov, "mass_nominal", p.mass_nominal);
    p.length_nominal = detail::json_or(ov, "length_nominal", p.length_nominal);
    p.gravity = detail::json_or(ov, "gravity", p.gravity);
    p.control_limit = detail::json_or(ov, "control_limit", p.control_limit);
    p.speed_limit = detail::json_or(ov, "speed_limit", p.speed_limit);
    if (ov.is_object() && ov.contains("x0"))
      p.x0 << ov.at("x0").at(0).get<double>(), ov.at("x0").at(1).get<double>();
    return make_pendulum(p);
  }
  throw std::invalid_argument("unknown environment: " + cfg.env_name);
}

inline int preset_steps(const Environment& env) {
  return env.name == "pendulum" ? 150 : 300;
}

inline Vec preset_lengthscales(const Environment& env) {
  if (env.name == "pendulum") {
    Vec l(3);
    l << 1.0, 2.0, 3.0;
    return l;
  }
  Vec l(4);
  l << 1.0, 1.0, 4.0, 4.0;
  return l;
}

inline double preset_kernel_variance(const Environment& env) {
  return env.name == "pendulum" ? 0.25 : 0.04;
}

inline double preset_gp_noise_variance(const Environment& env) {
  const double s = env.noise_std(0);
  return std::max(1e-8, s * s);
}

inline int resolved_steps(const RunConfig& cfg, const Environment& env) {
  return cfg.steps > 0 ? cfg.steps : preset_steps(env);
}

// The pendulum horizon follows the benchmark (15 at dt=0.05). The integrator
// needs roughly a one-second lookahead before motion pays off against its
// quadratic control cost, and a softmin temperature on the scale of its
// rollout-cost spread.
inline int preset_mppi_horizon(const Environment& env) {
  return env.name == "pendulum" ? 15 : 100;
}

inline double preset_mppi_temperature(const Environment& env) {
  return env.name == "pendulum" ? 1.0 : 15.0;
}

inline MppiConfig make_mppi_config(const RunConfig& cfg, const Environment& env) {
  MppiConfig m;
  m.horizon = cfg.mppi_horizon > 0 ? cfg.mppi_horizon : preset_mppi_horizon(env);
  m.rollouts = cfg.mppi_rollouts;
  m.temperature =
      cfg.mppi_temperature > 0.0 ? cfg.mppi_temperature : preset_mppi_temperature(env);
  m.bounds = env.bounds;
  m.noise_std = cfg.mppi_noise_frac * 0.5 * (env.bounds.hi - env.bounds.lo);
  return m;
}

// ---------------------------------------------------------------------------
// dynamics hypotheses

/// A per-episode dynamics hypothesis: a batched next-state map for the
/// planner (single-precision feature path) plus double-precision residual
/// predictors for the safety filter and logging.
struct Hypothesis {
  BatchDynamicsFn next_state;
  std::function<Vec(const Vec&, const Vec&)> d_pred;
  std::function<Mat(const Mat&, const Mat&)> d_pred_batch;
};

inline Hypothesis make_linear_hypothesis(const Environment& env,
                                         std::shared_ptr<const FeatureMap> featmap,
                                         Mat weights) {
  Hypothesis h;
  auto wf = std::make_shared<Eigen::MatrixXf>(weights.cast<float>());
  auto wd = std::make_shared<Mat>(std::move(weights));
  auto nominal_batch = env.nominal_batch;
  const Vec lo = env.state_clip_lo, hi = env.state_clip_hi;
  const int n = env.state_dim;

  h.next_state = [nominal_batch, featmap, wf, lo, hi, n](const Mat& x, const Mat& u) -> Mat {
    Mat next = nominal_batch(x, u);
    Eigen::MatrixXf z(x.rows() + u.rows(), x.cols());
    z.topRows(x.rows()) = x.cast<float>();
    z.bottomRows(u.rows()) = u.cast<float>();
    next += ((*wf) * featmap->eval_batch_f(z)).cast<double>();
    for (int i = 0; i < n; ++i)
      next.row(i) = next.row(i).cwiseMax(lo(i)).cwiseMin(hi(i));
    return next;
  };
  h.d_pred = [featmap, wd](const Vec& x, const Vec& u) -> Vec {
    return (*wd) * featmap->features(x, u);
  };
  h.d_pred_batch = [featmap, wd](const Mat& x, const Mat& u) -> Mat {
    Mat z(x.rows() + u.rows(), x.cols());
    z.topRows(x.rows()) = x;
    z.bottomRows(u.rows()) = u;
    return (*wd) * featmap->eval_batch(z);
  };
  return h;
}

inline Hypothesis make_gp_hypothesis(const Environment& env,
                                     std::shared_ptr<const GpModel> gp) {
  Hypothesis h;
  auto nominal_batch = env.nominal_batch;
  const Vec lo = env.state_clip_lo, hi = env.state_clip_hi;
  const int n = env.state_dim;

  auto residual_batch = [gp](const Mat& x, const Mat& u) -> Mat {
    Mat z(x.rows() + u.rows(), x.cols());
    z.topRows(x.rows()) = x;
    z.bottomRows(u.rows()) = u;
    return gp->predict_mean_batch(z);
  };
  h.next_state = [nominal_batch, residual_batch, lo, hi, n](const Mat& x, const Mat& u) -> Mat {
    Mat next = nominal_batch(x, u) + residual_batch(x, u);
    for (int i = 0; i < n; ++i)
      next.row(i) = next.row(i).cwiseMax(lo(i)).cwiseMin(hi(i));
    return next;
  };
  h.d_pred = [gp](const Vec& x, const Vec& u) -> Vec {
    Vec z(x.size() + u.size());
    z << x, u;
    return gp->predict(z).first;
  };
  h.d_pred_batch = residual_batch;
  return h;
}

/// Hypothesis that plans against the true environment; the ground-truth
/// baseline for oracle cost estimation.
inline Hypothesis make_true_hypothesis(const Environment& env) {
  Hypothesis h;
  h.next_state = env.true_map_batch;
  auto true_map = env.true_map;
  auto nominal = env.nominal;
  h.d_pred = [true_map, nominal](const Vec& x, const Vec& u) -> Vec {
    return true_map(x, u) - nominal(x, u);
  };
  auto true_batch = env.true_map_batch;
  auto nominal_batch = env.nominal_batch;
  h.d_pred_batch = [true_batch, nominal_batch](const Mat& x, const Mat& u) -> Mat {
    return true_batch(x, u) - nominal_batch(x, u);
  };
  return h;
}

// ---------------------------------------------------------------------------
// surrogate model variants

class Surrogate {
 public:
  virtual ~Surrogate() = default;
  virtual void init(const ResidualDataset& safe_dataset) = 0;
  virtual void fit(const ResidualDataset& increment) = 0;
  virtual Hypothesis sampled_hypothesis(std::uint64_t seed) const = 0;
  virtual Hypothesis mean_hypothesis() const = 0;
  virtual long data_count() const = 0;
  virtual nlohmann::json checkpoint() const = 0;

  /// Fits the increment and reports the fit wall time in ms. With repeats > 1
  /// the reported value is the median over repeated equivalent fits, which the
  /// timing benchmark uses to suppress scheduler noise.
  virtual double timed_fit(const ResidualDataset& increment, int repeats) {
    const auto t0 = std::chrono::steady_clock::now();
    fit(increment);
    (void)repeats;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  }

 protected:
  static double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  }
};

class LinearSurrogate final : public Surrogate {
 public:
  LinearSurrogate(Environment env, const FeatureConfig& fc, double ridge)
      : env_(std::move(env)),
        featmap_(std::make_shared<const FeatureMap>(build_feature_map(fc))),
        ridge_(ridge) {}

  void init(const ResidualDataset& safe_dataset) override {
    model_ = LinearDynModel::init_from_safe_dataset(featmap_, safe_dataset, ridge_);
  }
  void fit(const ResidualDataset& increment) override { model_.fit_ridge(increment); }

  double timed_fit(const ResidualDataset& increment, int repeats) override {
    std::vector<double> times;
    for (int r = 0; r + 1 < repeats; ++r) {
      LinearDynModel copy = model_;
      const auto t0 = std::chrono::steady_clock::now();
      copy.fit_ridge(increment);
      times.push_back(std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count());
    }
    const auto t0 = std::chrono::steady_clock::now();
    model_.fit_ridge(increment);
    times.push_back(std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count());
    return median_of(std::move(times));
  }

  Hypothesis sampled_hypothesis(std::uint64_t seed) const override {
    return make_linear_hypothesis(env_, featmap_, model_.thompson_sample(seed).weights);
  }
  Hypothesis mean_hypothesis() const override {
    return make_linear_hypothesis(env_, featmap_, model_.mean_weights());
  }
  long data_count() const override { return model_.data_count(); }
  nlohmann::json checkpoint() const override { return model_.to_json(); }
  const LinearDynModel& model() const { return model_; }
  const FeatureMap& feature_map() const { return *featmap_; }

 private:
  Environment env_;
  std::shared_ptr<const FeatureMap> featmap_;
  double ridge_ = 1.0;
  LinearDynModel model_;
};

/// Exact-GP surrogate; refits on the full accumulated dataset every episode,
/// so its per-episode fit time grows with the data count. Planning uses the
/// posterior mean.
class GpSurrogate final : public Surrogate {
 public:
  GpSurrogate(Environment env, GpHyper hyper)
      : env_(std::move(env)), hyper_(std::move(hyper)) {}

  void init(const ResidualDataset& safe_dataset) override {
    inputs_.resize(0, env_.state_dim + env_.control_dim);
    targets_.resize(0, env_.state_dim);
    fit(safe_dataset);
  }

  void fit(const ResidualDataset& increment) override {
    append(increment);
    refit();
  }

  double timed_fit(const ResidualDataset& increment, int repeats) override {
    append(increment);
    std::vector<double> times;
    for (int r = 0; r < std::max(1, repeats); ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      refit();
      times.push_back(std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count());
    }
    return median_of(std::move(times));
  }

  Hypothesis sampled_hypothesis(std::uint64_t) const override { return mean_hypothesis(); }
  Hypothesis mean_hypothesis() const override { return make_gp_hypothesis(env_, model_); }
  long data_count() const override { return model_ ? model_->data_count() : 0; }

  nlohmann::json checkpoint() const override {
    nlohmann::json j;
    j["type"] = "gp";
    j["lengthscales"] = detail::vector_to_json(hyper_.lengthscales);
    j["kernel_variance"] = hyper_.kernel_variance;
    j["noise_variance"] = hyper_.noise_variance;
    j["inputs"] = detail::matrix_to_json(inputs_);
    j["targets"] = detail::matrix_to_json(targets_);
    return j;
  }

  const GpModel& model() const { return *model_; }

 private:
  void append(const ResidualDataset& increment) {
    if (increment.empty()) return;
    const Eigen::Index base = inputs_.rows();
    inputs_.conservativeResize(base + increment.size(), Eigen::NoChange);
    targets_.conservativeResize(base + increment.size(), Eigen::NoChange);
    for (std::size_t i = 0; i < increment.size(); ++i) {
      const auto& s = increment[i];
      inputs_.row(base + i).head(s.x.size()) = s.x.transpose();
      inputs_.row(base + i).tail(s.u.size()) = s.u.transpose();
      targets_.row(base + i) = s.d.transpose();
    }
  }

  void refit() {
    model_ = std::make_shared<const GpModel>(GpModel::fit(inputs_, targets_, hyper_));
  }

  Environment env_;
  GpHyper hyper_;
  Mat inputs_;   // N x (n + m)
  Mat targets_;  // N x n
  std::shared_ptr<const GpModel> model_;
};

inline std::unique_ptr<Surrogate> make_surrogate(const RunConfig& cfg, const Environment& env) {
  const int input_dim = env.state_dim + env.control_dim;
  Vec ls = cfg.lengthscales.size() > 0 ? cfg.lengthscales : preset_lengthscales(env);
  require(ls.size() == input_dim, "make_surrogate: lengthscales size mismatch");
  const double kv =
      cfg.kernel_variance > 0.0 ? cfg.kernel_variance : preset_kernel_variance(env);

  if (cfg.model == ModelKind::GP) {
    GpHyper hyper;
    hyper.lengthscales = ls;
    hyper.kernel_variance = kv;
    hyper.noise_variance = cfg.gp_noise_variance > 0.0 ? cfg.gp_noise_variance
                                                       : preset_gp_noise_variance(env);
    return std::make_unique<GpSurrogate>(env, hyper);
  }
  FeatureConfig fc;
  fc.input_dim = input_dim;
  fc.feature_count = cfg.feature_count;
  fc.lengthscales = ls;
  fc.kernel_variance = kv;
  fc.kind = cfg.model == ModelKind::QFF ? FeatureKind::QFF : FeatureKind::RFF;
  fc.seed = mix_seed(cfg.seed, 0xFEA7);
  return std::make_unique<LinearSurrogate>(env, fc, cfg.ridge);
}

// ---------------------------------------------------------------------------
// episode execution

struct StepRecord {
  int k = 0;
  Vec x;
  Vec u_ref;
  Vec u_safe;
  double cost = 0.0;
  double h = 0.0;
  double b_pred = 0.0;
  double b_true = 0.0;
  double score = 0.0;
  double quantile = 0.0;
  double alpha = 0.0;
  double e = -1.0;  // coverage indicator; -1 when ACP is not updating
  bool feasible = true;
  double margin = 0.0;
  double deviation = 0.0;
  double wall_ms = 0.0;
};

struct EpisodeLog {
  int episode = 0;
  std::vector<StepRecord> steps;
  Mat states;  // (K+1) x n visited states, for plotting
  double min_h = 0.0;
  double total_cost = 0.0;
  double fit_time_ms = 0.0;
  long infeasible_events = 0;
  bool aborted = false;
};

struct EpisodeResult {
  EpisodeLog log;
  ResidualDataset residuals;
};

inline EpisodeResult run_episode(const Environment& env, const Hypothesis& planner,
                                 const Hypothesis& filter_hyp, AcpState& acp,
                                 SafetyMode mode, MppiConfig mppi_cfg, int steps,
                                 std::uint64_t noise_seed, int episode_index,
                                 const FilterOptions& fopts = {}) {
  require(steps >= 0, "run_episode: steps must be >= 0");
  EpisodeResult out;
  EpisodeLog& log = out.log;
  log.episode = episode_index;
  log.states.resize(steps + 1, env.state_dim);

  std::mt19937_64 env_rng(noise_seed);
  PlanState plan = make_plan_state(mppi_cfg);
  Vec x = env.x0;
  log.states.row(0) = x.transpose();
  double min_h = env.barrier.h(x);

  const double decay = 1.0 - env.barrier.gamma;
  for (int k = 0; k < steps; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    StepRecord rec;
    rec.k = k;
    rec.x = x;
    rec.h = env.barrier.h(x);

    PlanResult pr;
    try {
      pr = mppi_plan(x, planner.next_state, env.cost_batch, plan, mppi_cfg);
    } catch (const std::exception&) {
      log.aborted = true;
      break;
    }
    rec.u_ref = pr.u_ref;

    auto barrier_batch = [&](const Mat& u) -> RowVec {
      Mat xrep = x.replicate(1, u.cols());
      Mat next = env.nominal_batch(xrep, u) + filter_hyp.d_pred_batch(xrep, u);
      return env.barrier_batch(next).array() - decay * rec.h;
    };

    FilterResult fr;
    switch (mode) {
      case SafetyMode::None: {
        fr.u_safe = pr.u_ref;
        fr.feasible = true;
        fr.margin =
            predicted_barrier(x, pr.u_ref, env.nominal, filter_hyp.d_pred, env.barrier);
        fr.deviation = 0.0;
        rec.quantile = 0.0;
        break;
      }
      case SafetyMode::CBF: {
        rec.quantile = 0.0;
        fr = filter_control(pr.u_ref, x, env.nominal, filter_hyp.d_pred, env.barrier, 0.0,
                            env.bounds, fopts, barrier_batch);
        break;
      }
      case SafetyMode::CBF_ACP: {
        rec.quantile = acp.quantile();
        fr = filter_control(pr.u_ref, x, env.nominal, filter_hyp.d_pred, env.barrier,
                            rec.quantile, env.bounds, fopts, barrier_batch);
        break;
      }
    }
    if (!fr.feasible) ++log.infeasible_events;

    Vec x_next;
    try {
      x_next = env.step(x, fr.u_safe, env_rng);
    } catch (const std::exception&) {
      log.aborted = true;
      break;
    }

    rec.u_safe = fr.u_safe;
    rec.feasible = fr.feasible;
    rec.margin = fr.margin;
    rec.deviation = fr.deviation;
    rec.cost = env.cost(x, fr.u_safe);
    rec.b_pred = predicted_barrier(x, fr.u_safe, env.nominal, filter_hyp.d_pred, env.barrier);
    rec.b_true = realized_barrier(x, x_next, env.barrier);
    rec.score = nonconformity(rec.b_pred, rec.b_true);
    rec.alpha = acp.alpha();
    if (mode == SafetyMode::CBF_ACP) rec.e = acp.update(rec.score);

    out.residuals.push_back({x, fr.u_safe, x_next - env.nominal(x, fr.u_safe)});
    log.total_cost += rec.cost;
    x = x_next;
    log.states.row(k + 1) = x.transpose();
    min_h = std::min(min_h, env.barrier.h(x));
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    log.steps.push_back(std::move(rec));
  }
  if (log.aborted) log.states.conservativeResize(log.steps.size() + 1, env.state_dim);
  log.min_h = min_h;
  return out;
}

// ---------------------------------------------------------------------------
// training loop, evaluation, regret

inline ResidualDataset collect_safe_dataset(const Environment& env, int steps,
                                            std::uint64_t seed) {
  require(steps >= 1, "collect_safe_dataset: steps must be >= 1");
  ResidualDataset data;
  data.reserve(steps);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const Vec range = env.bounds.hi - env.bounds.lo;
  Vec x = env.x0;
  for (int i = 0; i < steps; ++i) {
    Vec u = env.safe_controller(x, i);
    for (int j = 0; j < env.control_dim; ++j) u(j) += 0.05 * range(j) * unif(rng);
    u = env.bounds.clip(u);
    Vec x_next = env.step(x, u, rng);
    data.push_back({x, u, x_next - env.nominal(x, u)});
    x = x_next;
  }
  return data;
}

/// Accumulated cost of one noise-free receding-horizon rollout where the
/// planner believes the supplied hypothesis; the environment itself evolves
/// under the true (noiseless) dynamics.
inline double evaluation_cost(const Environment& env, const Hypothesis& hyp,
                              MppiConfig mppi_cfg, int steps, std::uint64_t seed) {
  mppi_cfg.seed = seed;
  PlanState plan = make_plan_state(mppi_cfg);
  Vec x = env.x0;
  double total = 0.0;
  for (int k = 0; k < steps; ++k) {
    PlanResult pr = mppi_plan(x, hyp.next_state, env.cost_batch, plan, mppi_cfg);
    total += env.cost(x, pr.u_ref);
    x = env.step_noiseless(x, pr.u_ref);
  }
  return total;
}

/// Ground-truth baseline: MPPI planning directly on the true dynamics,
/// averaged over seeds. Stands in for the unavailable optimal policy cost.
inline double oracle_cost(const Environment& env, const MppiConfig& mppi_cfg, int steps,
                          int seeds, std::uint64_t seed0) {
  const Hypothesis gt = make_true_hypothesis(env);
  double total = 0.0;
  for (int s = 0; s < seeds; ++s)
    total += evaluation_cost(env, gt, mppi_cfg, steps, mix_seed(seed0, s));
  return total / seeds;
}

inline std::vector<double> empirical_regret(const std::vector<double>& episode_costs,
                                            double oracle) {
  std::vector<double> out;
  out.reserve(episode_costs.size());
  double acc = 0.0;
  for (double c : episode_costs) {
    acc += c - oracle;
    out.push_back(acc);
  }
  return out;
}

struct TrainLog {
  RunConfig config;
  int steps = 0;
  std::vector<EpisodeLog> episodes;
  std::vector<double> test_rewards;
  std::vector<double> regret;
  double oracle_cost = 0.0;
  double min_h_overall = 0.0;
  long data_count = 0;
  double final_alpha = 0.0;
  double final_quantile = 0.0;
  nlohmann::json checkpoint;
};

inline TrainLog train(const RunConfig& cfg) {
  cfg.validate();
  const Environment env = make_env(cfg);
  const int steps = resolved_steps(cfg, env);
  MppiConfig mppi_cfg = make_mppi_config(cfg, env);

  AcpConfig acp_cfg;
  acp_cfg.alpha_target = cfg.alpha_target;
  acp_cfg.learn_rate = cfg.learn_rate;
  acp_cfg.window = cfg.acp_window > 0 ? cfg.acp_window : steps;
  acp_cfg.prior_radius = cfg.acp_prior_radius;
  AcpState acp = AcpState::init(acp_cfg);

  auto surrogate = make_surrogate(cfg, env);
  surrogate->init(collect_safe_dataset(env, cfg.safe_dataset_steps,
                                       mix_seed(cfg.seed, seed_tag::safe_data)));

  TrainLog log;
  log.config = cfg;
  log.steps = steps;
  std::vector<double> episode_costs;

  for (int t = 0; t < cfg.episodes; ++t) {
    if (cfg.acp_reset_per_episode) acp = AcpState::init(acp_cfg);

    const Hypothesis planner =
        surrogate->sampled_hypothesis(mix_seed(cfg.seed, seed_tag::thompson, t));
    Hypothesis filter_hyp;
    switch (cfg.safety) {
      case SafetyMode::CBF:
        filter_hyp = surrogate->mean_hypothesis();
        break;
      case SafetyMode::CBF_ACP:
        filter_hyp = cfg.filter_uses_mean ? surrogate->mean_hypothesis() : planner;
        break;
      default:
        filter_hyp = planner;
        break;
    }

    mppi_cfg.seed = mix_seed(cfg.seed, seed_tag::plan, t);
    EpisodeResult er =
        run_episode(env, planner, filter_hyp, acp, cfg.safety, mppi_cfg, steps,
                    mix_seed(cfg.seed, seed_tag::env_noise, t), t);

    er.log.fit_time_ms = surrogate->timed_fit(er.residuals, cfg.fit_timing_repeats);

    episode_costs.push_back(er.log.total_cost);
    log.episodes.push_back(std::move(er.log));
    log.test_rewards.push_back(-evaluation_cost(env, surrogate->mean_hypothesis(),
                                                mppi_cfg, steps,
                                                mix_seed(cfg.seed, seed_tag::eval, t)));
  }

  log.oracle_cost =
      oracle_cost(env, mppi_cfg, steps, cfg.oracle_seeds, mix_seed(cfg.seed, seed_tag::oracle));
  log.regret = empirical_regret(episode_costs, log.oracle_cost);
  log.min_h_overall = std::numeric_limits<double>::infinity();
  for (const auto& ep : log.episodes) log.min_h_overall = std::min(log.min_h_overall, ep.min_h);
  log.data_count = surrogate->data_count();
  log.final_alpha = acp.alpha();
  log.final_quantile = acp.quantile();
  log.checkpoint = surrogate->checkpoint();
  return log;
}

}  // namespace safelearn
