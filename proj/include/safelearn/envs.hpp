#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "safelearn/common.hpp"

namespace safelearn {

/// Scalar barrier with decay factor; h >= 0 is the safe set.
struct BarrierSpec {
  std::function<double(const Vec&)> h;
  double gamma = 0.5;
  std::string description;

  void validate() const {
    require(static_cast<bool>(h), "BarrierSpec: missing barrier function");
    require(gamma > 0.0 && gamma <= 1.0, "BarrierSpec: gamma must lie in (0, 1]");
  }
};

/// Ground-truth simulation environment: true step, imprecise nominal model,
/// stage cost and barrier. Immutable after construction; stepping is a pure
/// function of (x, u, rng draw).
struct Environment {
  std::string name;
  int state_dim = 0;
  int control_dim = 0;
  double dt = 0.0;
  ControlBounds bounds;
  Vec state_clip_lo, state_clip_hi;  // +-inf where unused
  Vec noise_std;                     // additive, per state dimension
  Vec x0, goal;
  BarrierSpec barrier;

  std::function<Vec(const Vec&, const Vec&)> nominal;
  std::function<Vec(const Vec&, const Vec&)> true_map;  // deterministic part
  std::function<Vec(const Vec&)> residual;              // closed-form d(x); diagnostics only
  std::function<double(const Vec&, const Vec&)> cost;
  // hand-tuned stabilizing controller used to seed the safe dataset; the
  // step index lets it sweep a slow reference orbit inside the safe set
  std::function<Vec(const Vec&, int)> safe_controller;

  // batched variants, one input per column
  std::function<Mat(const Mat&, const Mat&)> nominal_batch;
  std::function<Mat(const Mat&, const Mat&)> true_map_batch;
  std::function<RowVec(const Mat&, const Mat&)> cost_batch;
  std::function<RowVec(const Mat&)> barrier_batch;

  Vec clip_state(const Vec& x) const {
    return x.cwiseMax(state_clip_lo).cwiseMin(state_clip_hi);
  }

  Mat clip_state_cols(const Mat& x) const {
    Mat out = x;
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      out.col(c) = out.col(c).cwiseMax(state_clip_lo).cwiseMin(state_clip_hi);
    return out;
  }

  Vec step(const Vec& x, const Vec& u, std::mt19937_64& rng) const {
    Vec next = true_map(x, bounds.clip(u));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < state_dim; ++i) next(i) += noise_std(i) * normal(rng);
    next = clip_state(next);
    require_finite(next, "Environment::step: state");
    return next;
  }

  Vec step_noiseless(const Vec& x, const Vec& u) const {
    Vec next = clip_state(true_map(x, bounds.clip(u)));
    require_finite(next, "Environment::step_noiseless: state");
    return next;
  }
};

struct IntegratorParams {
  double dt = 0.01;
  double noise_std = 0.01;  // = dt, one per component
  double obstacle_radius = 0.6;
  double control_limit = 4.0;
  double gamma = 0.5;
  // start/goal chosen so the straight path crosses the obstacle disk while
  // the drift term stays against or across, never dead upwind of, the motion
  Eigen::Vector2d x0{-1.0, 0.5};
  Eigen::Vector2d goal{1.0, -0.8};
  bool residual_enabled = true;
};

/// Planar single-integrator robot with a state-dependent drift term and an
/// obstacle disk the barrier keeps the robot outside of.
inline Environment make_integrator(const IntegratorParams& p = {}) {
  require(p.dt > 0.0, "integrator: dt must be positive");
  Environment env;
  env.name = "integrator";
  env.state_dim = 2;
  env.control_dim = 2;
  env.dt = p.dt;
  env.bounds.lo = Vec::Constant(2, -p.control_limit);
  env.bounds.hi = Vec::Constant(2, p.control_limit);
  env.state_clip_lo = Vec::Constant(2, -std::numeric_limits<double>::infinity());
  env.state_clip_hi = Vec::Constant(2, std::numeric_limits<double>::infinity());
  env.noise_std = Vec::Constant(2, p.noise_std);
  env.x0 = p.x0;
  env.goal = p.goal;

  const double r2 = p.obstacle_radius * p.obstacle_radius;
  env.barrier.h = [r2](const Vec& x) { return x.squaredNorm() - r2; };
  env.barrier.gamma = p.gamma;
  env.barrier.description = "outside disk of radius " + std::to_string(p.obstacle_radius);

  const bool drift = p.residual_enabled;
  auto residual = [drift](const Vec& x) {
    Vec d = Vec::Zero(2);
    if (drift) {
      d(0) = 0.01 * std::sin(x(1)) * std::cos(x(0)) + 0.006;
      d(1) = 0.01 * std::exp(x(1)) * std::cos(3.0 - 0.5 * x(1));
    }
    return d;
  };
  env.residual = residual;

  const double dt = p.dt;
  env.nominal = [dt](const Vec& x, const Vec& u) -> Vec { return x + u * dt; };
  env.true_map = [dt, drift, residual](const Vec& x, const Vec& u) -> Vec {
    Vec next = x + u * dt;
    if (drift) next += residual(x);
    return next;
  };
  Vec goal = env.goal;
  env.cost = [goal](const Vec& x, const Vec& u) {
    return (x - goal).squaredNorm() + u.squaredNorm();
  };
  Vec anchor = env.x0;
  ControlBounds bounds = env.bounds;
  env.safe_controller = [anchor, bounds, dt](const Vec& x, int step) {
    // track a slow orbit around the start point; stays well clear of the
    // obstacle and covers a range of states and headings
    const double phase = 0.08 * step;
    Vec ref(2);
    ref << anchor(0) + 0.3 * std::sin(phase), anchor(1) + 0.3 * (1.0 - std::cos(phase));
    Vec ref_next(2);
    const double next_phase = phase + 0.08;
    ref_next << anchor(0) + 0.3 * std::sin(next_phase),
        anchor(1) + 0.3 * (1.0 - std::cos(next_phase));
    return bounds.clip(Vec((ref_next - x) / dt * 0.5));
  };

  env.nominal_batch = [dt](const Mat& x, const Mat& u) -> Mat { return x + u * dt; };
  env.true_map_batch = [dt, drift](const Mat& x, const Mat& u) -> Mat {
    Mat next = x + u * dt;
    if (drift) {
      next.row(0).array() +=
          0.01 * x.row(1).array().sin() * x.row(0).array().cos() + 0.006;
      next.row(1).array() +=
          0.01 * x.row(1).array().exp() * (3.0 - 0.5 * x.row(1).array()).cos();
    }
    return next;
  };
  env.cost_batch = [goal](const Mat& x, const Mat& u) -> RowVec {
    return (x.colwise() - goal).colwise().squaredNorm() + u.colwise().squaredNorm();
  };
  env.barrier_batch = [r2](const Mat& x) -> RowVec {
    return x.colwise().squaredNorm().array() - r2;
  };
  return env;
}

struct PendulumParams {
  double dt = 0.05;
  double noise_std = 0.005;
  double mass_true = 1.0;
  double length_true = 1.0;
  double mass_nominal = 1.2;
  double length_nominal = 1.2;
  double gravity = 9.81;
  double control_limit = 5.0;
  double speed_limit = 16.0;
  double ellipse_a = 1.0;
  double ellipse_b = 2.0;
  double gamma = 0.5;
  Eigen::Vector2d x0{0.4, 0.0};
};

/// Torque-limited inverted pendulum; the nominal model carries deliberately
/// imprecise mass and length. The barrier keeps (theta, theta_dot) inside a
/// tilted ellipse around the upright equilibrium.
inline Environment make_pendulum(const PendulumParams& p = {}) {
  require(p.dt > 0.0, "pendulum: dt must be positive");
  Environment env;
  env.name = "pendulum";
  env.state_dim = 2;
  env.control_dim = 1;
  env.dt = p.dt;
  env.bounds.lo = Vec::Constant(1, -p.control_limit);
  env.bounds.hi = Vec::Constant(1, p.control_limit);
  env.state_clip_lo = Vec(2);
  env.state_clip_hi = Vec(2);
  env.state_clip_lo << -std::numeric_limits<double>::infinity(), -p.speed_limit;
  env.state_clip_hi << std::numeric_limits<double>::infinity(), p.speed_limit;
  env.noise_std = Vec::Constant(2, p.noise_std);
  env.x0 = p.x0;
  env.goal = Eigen::Vector2d::Zero();

  const double a = p.ellipse_a, b = p.ellipse_b;
  env.barrier.h = [a, b](const Vec& x) {
    return 1.0 - x(0) * x(0) / (a * a) - x(1) * x(1) / (b * b) - x(0) * x(1) / (a * b);
  };
  env.barrier.gamma = p.gamma;
  env.barrier.description = "inside tilted ellipse a=" + std::to_string(a) +
                            " b=" + std::to_string(b);

  const double dt = p.dt;
  auto step_with = [dt](double g_half, double inertia, const Vec& x, const Vec& u) -> Vec {
    const double s = std::sin(x(0));
    Vec next(2);
    next(0) = x(0) + x(1) * dt + g_half * s * dt * dt + inertia * dt * dt * u(0);
    next(1) = x(1) + g_half * s * dt + inertia * dt * u(0);
    return next;
  };
  const double g_half_true = 1.5 * p.gravity / p.length_true;
  const double inertia_true = 3.0 / (p.mass_true * p.length_true * p.length_true);
  const double g_half_nom = 1.5 * p.gravity / p.length_nominal;
  const double inertia_nom = 3.0 / (p.mass_nominal * p.length_nominal * p.length_nominal);
  const double speed = p.speed_limit;

  env.true_map = [=](const Vec& x, const Vec& u) {
    return step_with(g_half_true, inertia_true, x, u);
  };
  env.nominal = [=](const Vec& x, const Vec& u) -> Vec {
    Vec next = step_with(g_half_nom, inertia_nom, x, u);
    next(1) = std::clamp(next(1), -speed, speed);
    return next;
  };
  env.cost = [](const Vec& x, const Vec& u) {
    return x(0) * x(0) + 0.1 * x(1) * x(1) + 0.001 * u(0) * u(0);
  };
  ControlBounds bounds = env.bounds;
  env.safe_controller = [bounds](const Vec& x, int) {
    Vec u(1);
    u(0) = -10.0 * x(0) - 2.0 * x(1);
    return bounds.clip(u);
  };

  auto batch_with = [dt, speed](double g_half, double inertia, const Mat& x,
                                const Mat& u) -> Mat {
    Mat next(2, x.cols());
    auto s = x.row(0).array().sin();
    next.row(0) = x.row(0).array() + x.row(1).array() * dt + g_half * s * dt * dt +
                  inertia * dt * dt * u.row(0).array();
    next.row(1) = (x.row(1).array() + g_half * s * dt + inertia * dt * u.row(0).array())
                      .max(-speed)
                      .min(speed);
    return next;
  };
  env.true_map_batch = [=](const Mat& x, const Mat& u) {
    return batch_with(g_half_true, inertia_true, x, u);
  };
  env.nominal_batch = [=](const Mat& x, const Mat& u) {
    return batch_with(g_half_nom, inertia_nom, x, u);
  };
  env.cost_batch = [](const Mat& x, const Mat& u) -> RowVec {
    return (x.row(0).array().square() + 0.1 * x.row(1).array().square() +
            0.001 * u.row(0).array().square())
        .matrix();
  };
  env.barrier_batch = [a, b](const Mat& x) -> RowVec {
    return (1.0 - x.row(0).array().square() / (a * a) -
            x.row(1).array().square() / (b * b) -
            x.row(0).array() * x.row(1).array() / (a * b))
        .matrix();
  };
  return env;
}

}  // namespace safelearn
