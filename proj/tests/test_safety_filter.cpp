#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "safelearn/envs.hpp"
#include "safelearn/kernel_features.hpp"
#include "safelearn/safety_filter.hpp"

using namespace safelearn;

namespace {

auto zero_residual = [](const Vec& x, const Vec&) { return Vec::Zero(x.size()); };

struct GridOracle {
  bool feasible = false;
  double best_deviation = 0.0;
  Vec best_u;
  Vec argmax_u;
  double max_g = -std::numeric_limits<double>::infinity();
};

/// Brute-force reference: dense 201-per-dimension sweep of the control box.
GridOracle grid_solve(const BarrierFn& barrier, double radius, const Vec& u_ref,
                      const ControlBounds& bounds, int points = 201) {
  GridOracle out;
  const int m = bounds.dim();
  std::vector<int> idx(m, 0);
  long total = 1;
  for (int i = 0; i < m; ++i) total *= points;
  out.best_deviation = std::numeric_limits<double>::infinity();
  for (long c = 0; c < total; ++c) {
    Vec u(m);
    for (int i = 0; i < m; ++i)
      u(i) = bounds.lo(i) + (bounds.hi(i) - bounds.lo(i)) * idx[i] / (points - 1);
    const double g = barrier(u) - radius;
    if (g > out.max_g) {
      out.max_g = g;
      out.argmax_u = u;
    }
    if (g >= 0.0) {
      const double dev = (u - u_ref).norm();
      if (dev < out.best_deviation) {
        out.best_deviation = dev;
        out.best_u = u;
        out.feasible = true;
      }
    }
    for (int i = m - 1; i >= 0; --i) {
      if (++idx[i] < points) break;
      idx[i] = 0;
    }
  }
  return out;
}

/// Smooth random residual model over (x, u); stands in for a sampled
/// hypothesis in randomized filter instances.
std::function<Vec(const Vec&, const Vec&)> random_residual(int state_dim, int control_dim,
                                                           std::uint64_t seed,
                                                           double scale) {
  FeatureConfig c;
  c.input_dim = state_dim + control_dim;
  c.feature_count = 16;
  c.lengthscales = Vec::Ones(c.input_dim) * 1.5;
  c.kind = FeatureKind::QFF;
  auto fm = std::make_shared<const FeatureMap>(build_qff(c));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, scale);
  auto w = std::make_shared<Mat>(state_dim, fm->realized_dim());
  for (int i = 0; i < w->size(); ++i) w->data()[i] = gauss(rng);
  return [fm, w](const Vec& x, const Vec& u) { return (*w) * fm->features(x, u); };
}

}  // namespace

TEST_CASE("barrier predictor matches hand computation", "[filter]") {
  Environment env = make_integrator();
  Vec x(2), u(2);
  x << 1.0, 0.0;
  u << 1.0, 0.0;
  const double b = predicted_barrier(x, u, env.nominal, zero_residual, env.barrier);
  REQUIRE(b == Catch::Approx(0.3401).margin(1e-12));

  BarrierSpec full = env.barrier;
  full.gamma = 1.0;
  const double b_full = predicted_barrier(x, u, env.nominal, zero_residual, full);
  Vec next = env.nominal(x, u);
  REQUIRE(b_full == Catch::Approx(env.barrier.h(next)).margin(1e-15));
}

TEST_CASE("exact model and no noise collapse B to B*", "[filter]") {
  Environment env = make_integrator();
  auto d_true = [&env](const Vec& x, const Vec&) { return env.residual(x); };
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    Vec x(2), u(2);
    x << unif(rng), unif(rng);
    u << 3.0 * unif(rng), 3.0 * unif(rng);
    const double b = predicted_barrier(x, u, env.nominal, d_true, env.barrier);
    const double b_star = realized_barrier(x, env.step_noiseless(x, u), env.barrier);
    REQUIRE(b == Catch::Approx(b_star).margin(1e-12));
  }
}

TEST_CASE("realized barrier reflects injected disturbances", "[filter]") {
  Environment env = make_integrator();
  BarrierSpec full = env.barrier;
  full.gamma = 1.0;
  Vec x(2);
  x << 0.3, -0.2;
  REQUIRE(realized_barrier(x, x, full) == Catch::Approx(env.barrier.h(x)).margin(1e-15));

  // disturbance constructed to shift h by exactly +0.01
  Vec x_pred(2), x_obs(2);
  x_pred << 1.0, 0.0;
  x_obs << std::sqrt(1.01), 0.0;
  const double b = realized_barrier(x, x_pred, env.barrier);
  const double b_shifted = realized_barrier(x, x_obs, env.barrier);
  REQUIRE(b_shifted - b == Catch::Approx(0.01).margin(1e-9));
}

TEST_CASE("feasible references pass through untouched", "[filter]") {
  Environment env = make_integrator();
  Vec x(2);
  x << 1.0, 1.0;  // far outside the obstacle
  Vec u_ref(2);
  u_ref << 0.7, -0.3;
  FilterResult r = filter_control(u_ref, x, env.nominal, zero_residual, env.barrier, 0.0,
                                  env.bounds);
  REQUIRE(r.u_safe == u_ref);
  REQUIRE(r.feasible);
  REQUIRE(r.deviation == 0.0);
}

TEST_CASE("active constraint deflects the control onto the boundary", "[filter]") {
  Environment env = make_integrator();
  // close enough that gamma-decay cannot absorb a full-speed approach
  Vec x(2);
  x << 0.65, 0.0;
  Vec u_ref(2);
  u_ref << -4.0, 0.0;  // straight at the obstacle

  auto barrier = [&](const Vec& u) {
    return predicted_barrier(x, u, env.nominal, zero_residual, env.barrier);
  };
  FilterResult r = filter_control(u_ref, x, env.nominal, zero_residual, env.barrier, 0.0,
                                  env.bounds);
  REQUIRE(r.feasible);
  REQUIRE(r.margin >= -1e-9);
  REQUIRE(r.deviation > 0.0);

  GridOracle oracle = grid_solve(barrier, 0.0, env.bounds.clip(u_ref), env.bounds);
  REQUIRE(oracle.feasible);
  const double resolution = (env.bounds.hi(0) - env.bounds.lo(0)) / 200.0 * std::sqrt(2.0);
  REQUIRE(std::abs(r.deviation - oracle.best_deviation) <= resolution);
  REQUIRE(r.deviation <= oracle.best_deviation + 1e-6);
}

TEST_CASE("infeasible problems return the max-margin control", "[filter]") {
  Environment env = make_integrator();
  Vec x(2);
  x << 0.7, 0.0;
  Vec u_ref = Vec::Zero(2);
  auto barrier = [&](const Vec& u) {
    return predicted_barrier(x, u, env.nominal, zero_residual, env.barrier);
  };
  GridOracle oracle = grid_solve(barrier, 0.0, u_ref, env.bounds);
  const double radius = oracle.max_g + 1.0;  // beyond the attainable maximum

  FilterResult r =
      filter_control(u_ref, x, env.nominal, zero_residual, env.barrier, radius, env.bounds);
  REQUIRE_FALSE(r.feasible);
  const double resolution = (env.bounds.hi(0) - env.bounds.lo(0)) / 200.0 * std::sqrt(2.0);
  REQUIRE((r.u_safe - oracle.argmax_u).norm() <= 2.0 * resolution);
  REQUIRE(r.margin <= 0.0);
}

TEST_CASE("randomized instances stay within the grid-oracle tolerance", "[filter]") {
  Environment integrator = make_integrator();
  Environment pendulum = make_pendulum();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  int checked_feasible = 0;
  for (int i = 0; i < 30; ++i) {
    const bool planar = i % 2 == 0;
    const Environment& env = planar ? integrator : pendulum;
    Vec x(2);
    if (planar) {
      do {
        x << 1.2 * unif(rng), 1.2 * unif(rng);
      } while (env.barrier.h(x) < 0.05);
    } else {
      do {
        x << 0.8 * unif(rng), 1.5 * unif(rng);
      } while (env.barrier.h(x) < 0.05);
    }
    auto d_pred = random_residual(2, env.control_dim, 100 + i, 0.02);
    Vec u_ref(env.control_dim);
    for (int j = 0; j < u_ref.size(); ++j)
      u_ref(j) = unif(rng) * env.bounds.hi(j) * 1.2;
    const double radius = std::abs(unif(rng)) * 0.1;

    auto barrier = [&](const Vec& u) {
      return predicted_barrier(x, u, env.nominal, d_pred, env.barrier);
    };
    FilterResult r =
        filter_control(u_ref, x, env.nominal, d_pred, env.barrier, radius, env.bounds);
    GridOracle oracle = grid_solve(barrier, radius, env.bounds.clip(u_ref), env.bounds);

    if (r.feasible) REQUIRE(r.margin >= -1e-9);
    REQUIRE(r.feasible == oracle.feasible);
    if (oracle.feasible) {
      const double resolution = (env.bounds.hi(0) - env.bounds.lo(0)) / 200.0 *
                                std::sqrt(static_cast<double>(env.control_dim));
      REQUIRE(std::abs(r.deviation - oracle.best_deviation) <= resolution);
      REQUIRE(r.deviation <= oracle.best_deviation + 1e-6);
      ++checked_feasible;
    }
  }
  REQUIRE(checked_feasible >= 10);  // the sweep must exercise the constrained branch
}

TEST_CASE("larger radii never reduce the deviation", "[filter]") {
  Environment env = make_integrator();
  Vec x(2);
  x << 0.75, 0.1;
  Vec u_ref(2);
  u_ref << -3.0, -0.5;
  double prev_dev = -1.0;
  for (double radius : {0.0, 0.02, 0.05, 0.1, 0.2}) {
    FilterResult r = filter_control(u_ref, x, env.nominal, zero_residual, env.barrier,
                                    radius, env.bounds);
    if (!r.feasible) break;
    REQUIRE(r.deviation >= prev_dev - 1e-9);
    prev_dev = r.deviation;
  }
}

TEST_CASE("filtered controls keep the exactly-modeled system safe", "[filter]") {
  Environment env = make_integrator();
  auto d_true = [&env](const Vec& x, const Vec&) { return env.residual(x); };
  Vec x(2);
  x << 0.8, 0.0;
  Vec u_hostile(2);
  u_hostile << -4.0, 0.0;
  for (int k = 0; k < 300; ++k) {
    FilterResult r = filter_control(u_hostile, x, env.nominal, d_true, env.barrier, 0.0,
                                    env.bounds);
    x = env.step_noiseless(x, r.u_safe);
    REQUIRE(env.barrier.h(x) >= -1e-9);
  }
}

TEST_CASE("filter input validation", "[filter]") {
  Environment env = make_integrator();
  Vec x(2);
  x << 0.8, 0.0;
  Vec nan_ref = Vec::Constant(2, std::nan(""));
  REQUIRE_THROWS_AS(filter_control(nan_ref, x, env.nominal, zero_residual, env.barrier,
                                   0.0, env.bounds),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(filter_control(Vec::Zero(2), x, env.nominal, zero_residual,
                                   env.barrier, -0.1, env.bounds),
                    std::invalid_argument);
}
