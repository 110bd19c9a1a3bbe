#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "safelearn/common.hpp"

namespace safelearn {

struct MppiConfig {
  int horizon = 15;
  int rollouts = 512;
  double temperature = 1.0;
  Vec noise_std;  // per control dimension
  ControlBounds bounds;
  std::uint64_t seed = 0;

  void validate() const {
    require(horizon >= 1, "MppiConfig: horizon must be >= 1");
    require(rollouts >= 1, "MppiConfig: rollouts must be >= 1");
    require(temperature > 0.0, "MppiConfig: temperature must be positive");
    bounds.validate();
    require(noise_std.size() == bounds.dim(), "MppiConfig: noise_std size mismatch");
    require((noise_std.array() > 0.0).all(), "MppiConfig: noise_std must be positive");
  }
};

/// Warm-started nominal control sequence, shifted by one step after each plan.
struct PlanState {
  Mat nominal;  // horizon x control_dim
  long step_index = 0;
};

inline PlanState make_plan_state(const MppiConfig& cfg) {
  PlanState s;
  s.nominal = Mat::Zero(cfg.horizon, cfg.bounds.dim());
  return s;
}

/// Batched callables, one rollout per column.
using BatchDynamicsFn = std::function<Mat(const Mat& states, const Mat& controls)>;
using BatchCostFn = std::function<RowVec(const Mat& states, const Mat& controls)>;

struct PlanResult {
  Vec u_ref;     // first control of the weighted-average sequence
  Mat averaged;  // horizon x control_dim
  Vec weights;   // rollout weights, a probability simplex
  double min_cost = 0.0;
};

inline BatchDynamicsFn batch_dynamics_from_point(
    std::function<Vec(const Vec&, const Vec&)> f) {
  return [f = std::move(f)](const Mat& x, const Mat& u) {
    Mat next(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) next.col(c) = f(x.col(c), u.col(c));
    return next;
  };
}

inline BatchCostFn batch_cost_from_point(std::function<double(const Vec&, const Vec&)> c) {
  return [c = std::move(c)](const Mat& x, const Mat& u) {
    RowVec out(x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) out(i) = c(x.col(i), u.col(i));
    return out;
  };
}

/// Deterministic forward simulation of a control sequence; returns the
/// visited states (rows) and the accumulated stage cost.
inline std::pair<Mat, double> rollout(const Vec& x0,
                                      const std::function<Vec(const Vec&, const Vec&)>& dyn,
                                      const Mat& controls,
                                      const std::function<double(const Vec&, const Vec&)>& cost) {
  require_finite(x0, "rollout: initial state");
  const int h = static_cast<int>(controls.rows());
  Mat traj(h + 1, x0.size());
  traj.row(0) = x0.transpose();
  double total = 0.0;
  Vec x = x0;
  for (int k = 0; k < h; ++k) {
    const Vec u = controls.row(k).transpose();
    total += cost(x, u);
    x = dyn(x, u);
    require_finite(x, "rollout: state");
    traj.row(k + 1) = x.transpose();
  }
  return {traj, total};
}

/// One receding-horizon step: sample perturbed control sequences around the
/// warm-started nominal, roll them out under the supplied dynamics
/// hypothesis, and softmin-average them by trajectory cost. Rollout noise
/// streams are seeded per rollout index so evaluation order cannot change
/// the result.
inline PlanResult mppi_plan(const Vec& x0, const BatchDynamicsFn& dynamics,
                            const BatchCostFn& cost, PlanState& plan,
                            const MppiConfig& cfg) {
  cfg.validate();
  require_finite(x0, "mppi_plan: state");
  const int h = cfg.horizon;
  const int m = cfg.bounds.dim();
  const int r = cfg.rollouts;
  require(plan.nominal.rows() == h && plan.nominal.cols() == m,
          "mppi_plan: plan state shape mismatch");

  // candidate control sequences, clipped to the box
  std::vector<Mat> candidates(h, Mat(m, r));
  {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int j = 0; j < r; ++j) {
      std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(plan.step_index),
                                   static_cast<std::uint64_t>(j)));
      for (int k = 0; k < h; ++k)
        for (int i = 0; i < m; ++i)
          candidates[k](i, j) = std::clamp(
              plan.nominal(k, i) + cfg.noise_std(i) * normal(rng),
              cfg.bounds.lo(i), cfg.bounds.hi(i));
    }
  }

  RowVec costs = RowVec::Zero(r);
  Mat x = x0.replicate(1, r);
  for (int k = 0; k < h; ++k) {
    costs += cost(x, candidates[k]);
    x = dynamics(x, candidates[k]);
  }
  for (int j = 0; j < r; ++j) {
    if (!std::isfinite(costs(j)) || !x.col(j).allFinite())
      costs(j) = std::numeric_limits<double>::infinity();
  }

  const double min_cost = costs.minCoeff();
  if (!std::isfinite(min_cost))
    throw std::runtime_error("mppi_plan: every rollout produced a non-finite cost");

  Vec weights(r);
  for (int j = 0; j < r; ++j) {
    const double c = costs(j);
    weights(j) = std::isfinite(c) ? std::exp(-(c - min_cost) / cfg.temperature) : 0.0;
  }
  weights /= weights.sum();

  PlanResult result;
  result.averaged.resize(h, m);
  for (int k = 0; k < h; ++k) result.averaged.row(k) = (candidates[k] * weights).transpose();
  result.u_ref = cfg.bounds.clip(result.averaged.row(0).transpose());
  result.weights = weights;
  result.min_cost = min_cost;

  // warm start: shift by one, repeat the last entry
  if (h > 1) plan.nominal.topRows(h - 1) = result.averaged.bottomRows(h - 1);
  plan.nominal.row(h - 1) = result.averaged.row(h - 1);
  ++plan.step_index;
  return result;
}

}  // namespace safelearn
