#include <catch2/catch_amalgamated.hpp>

#include "safelearn/mppi.hpp"

using namespace safelearn;

namespace {

MppiConfig scalar_config(int horizon, int rollouts, double noise, double temp = 1.0) {
  MppiConfig c;
  c.horizon = horizon;
  c.rollouts = rollouts;
  c.temperature = temp;
  c.noise_std = Vec::Constant(1, noise);
  c.bounds.lo = Vec::Constant(1, -4.0);
  c.bounds.hi = Vec::Constant(1, 4.0);
  c.seed = 11;
  return c;
}

const BatchDynamicsFn identity_dynamics = [](const Mat& x, const Mat&) { return x; };

}  // namespace

TEST_CASE("vanishing exploration noise returns the nominal control", "[mppi]") {
  MppiConfig cfg = scalar_config(5, 64, 1e-12);
  PlanState plan = make_plan_state(cfg);
  plan.nominal.setConstant(0.7);
  BatchCostFn cost = [](const Mat& x, const Mat& u) -> RowVec {
    return u.row(0).array().square().matrix();
  };
  PlanResult r = mppi_plan(Vec::Zero(1), identity_dynamics, cost, plan, cfg);
  REQUIRE(r.u_ref(0) == Catch::Approx(0.7).margin(1e-9));
}

TEST_CASE("one-step quadratic cost recovers the grid minimizer", "[mppi]") {
  // exhaustive 1-D control sweep pins the optimum of (u - 0.3)^2 at 0.3
  double best_u = 0.0, best_c = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 4000; ++i) {
    const double u = -4.0 + 8.0 * i / 4000.0;
    const double c = (u - 0.3) * (u - 0.3);
    if (c < best_c) {
      best_c = c;
      best_u = u;
    }
  }
  REQUIRE(best_u == Catch::Approx(0.3).margin(1e-3));

  MppiConfig cfg = scalar_config(1, 100000, 1.0, 0.01);
  PlanState plan = make_plan_state(cfg);
  BatchCostFn cost = [](const Mat&, const Mat& u) -> RowVec {
    return (u.row(0).array() - 0.3).square().matrix();
  };
  PlanResult r = mppi_plan(Vec::Zero(1), identity_dynamics, cost, plan, cfg);
  REQUIRE(std::abs(r.u_ref(0) - best_u) < 0.05);
}

TEST_CASE("planning is deterministic per seed", "[mppi]") {
  MppiConfig cfg = scalar_config(8, 256, 0.8);
  BatchCostFn cost = [](const Mat& x, const Mat& u) -> RowVec {
    return (x.row(0).array().square() + 0.1 * u.row(0).array().square()).matrix();
  };
  BatchDynamicsFn dyn = [](const Mat& x, const Mat& u) { return x + 0.1 * u; };

  PlanState p1 = make_plan_state(cfg), p2 = make_plan_state(cfg);
  PlanResult a = mppi_plan(Vec::Ones(1), dyn, cost, p1, cfg);
  PlanResult b = mppi_plan(Vec::Ones(1), dyn, cost, p2, cfg);
  REQUIRE(a.u_ref == b.u_ref);
  REQUIRE(a.averaged == b.averaged);

  // a different step index decorrelates the noise streams
  PlanResult c = mppi_plan(Vec::Ones(1), dyn, cost, p1, cfg);
  REQUIRE(c.u_ref != a.u_ref);
}

TEST_CASE("rollout weights form a probability simplex", "[mppi]") {
  MppiConfig cfg = scalar_config(4, 512, 0.5);
  BatchCostFn cost = [](const Mat& x, const Mat& u) -> RowVec {
    return (x.row(0).array().square() + u.row(0).array().square()).matrix();
  };
  BatchDynamicsFn dyn = [](const Mat& x, const Mat& u) { return x + 0.2 * u; };
  PlanState plan = make_plan_state(cfg);
  PlanResult r = mppi_plan(Vec::Ones(1), dyn, cost, plan, cfg);
  REQUIRE((r.weights.array() >= 0.0).all());
  REQUIRE(r.weights.sum() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("adding a cost constant does not change the plan", "[mppi]") {
  MppiConfig cfg = scalar_config(6, 256, 0.6);
  BatchDynamicsFn dyn = [](const Mat& x, const Mat& u) { return x + 0.2 * u; };
  BatchCostFn cost = [](const Mat& x, const Mat& u) -> RowVec {
    return (x.row(0).array().square() + u.row(0).array().square()).matrix();
  };
  BatchCostFn shifted = [](const Mat& x, const Mat& u) -> RowVec {
    return (x.row(0).array().square() + u.row(0).array().square() + 37.0).matrix();
  };
  PlanState p1 = make_plan_state(cfg), p2 = make_plan_state(cfg);
  PlanResult a = mppi_plan(Vec::Ones(1), dyn, cost, p1, cfg);
  PlanResult b = mppi_plan(Vec::Ones(1), dyn, shifted, p2, cfg);
  REQUIRE(std::abs(a.u_ref(0) - b.u_ref(0)) < 1e-9);
}

TEST_CASE("warm start shifts the averaged sequence by one step", "[mppi]") {
  MppiConfig cfg = scalar_config(5, 128, 0.5);
  BatchDynamicsFn dyn = [](const Mat& x, const Mat& u) { return x + 0.2 * u; };
  BatchCostFn cost = [](const Mat& x, const Mat& u) -> RowVec {
    return (x.row(0).array().square() + u.row(0).array().square()).matrix();
  };
  PlanState plan = make_plan_state(cfg);
  PlanResult r = mppi_plan(Vec::Ones(1), dyn, cost, plan, cfg);
  REQUIRE(plan.nominal.topRows(4) == r.averaged.bottomRows(4));
  REQUIRE(plan.nominal.row(4) == r.averaged.row(4));
  REQUIRE(plan.step_index == 1);
}

TEST_CASE("deterministic rollout helper", "[mppi]") {
  auto dyn = [](const Vec& x, const Vec& u) -> Vec { return x + 0.5 * u; };
  auto cost = [](const Vec& x, const Vec& u) { return x.squaredNorm() + u.squaredNorm(); };

  // zero controls keep the state constant
  auto [traj0, cost0] = rollout(Vec::Ones(1), dyn, Mat::Zero(6, 1), cost);
  REQUIRE(traj0.rows() == 7);
  REQUIRE((traj0.array() == 1.0).all());
  REQUIRE(cost0 == Catch::Approx(6.0));

  // zero-step rollout
  auto [traj_empty, cost_empty] = rollout(Vec::Ones(1), dyn, Mat::Zero(0, 1), cost);
  REQUIRE(cost_empty == 0.0);
  REQUIRE(traj_empty.rows() == 1);

  // cost additivity along the same trajectory
  Mat controls(6, 1);
  controls << 0.4, -0.2, 0.8, 0.1, -0.5, 0.3;
  auto [traj, total] = rollout(Vec::Ones(1), dyn, controls, cost);
  auto [traj_a, first] = rollout(Vec::Ones(1), dyn, controls.topRows(2), cost);
  auto [traj_b, rest] =
      rollout(traj.row(2).transpose(), dyn, controls.bottomRows(4), cost);
  REQUIRE(total == Catch::Approx(first + rest).margin(1e-12));
}

TEST_CASE("all-diverging rollouts raise an error", "[mppi]") {
  MppiConfig cfg = scalar_config(2, 16, 0.5);
  BatchDynamicsFn dyn = [](const Mat& x, const Mat&) { return x; };
  BatchCostFn bad_cost = [](const Mat& x, const Mat&) -> RowVec {
    return RowVec::Constant(x.cols(), std::numeric_limits<double>::quiet_NaN());
  };
  PlanState plan = make_plan_state(cfg);
  REQUIRE_THROWS_AS(mppi_plan(Vec::Zero(1), dyn, bad_cost, plan, cfg),
                    std::runtime_error);
}

TEST_CASE("config validation", "[mppi]") {
  MppiConfig cfg = scalar_config(0, 16, 0.5);
  PlanState plan;
  plan.nominal = Mat::Zero(1, 1);
  REQUIRE_THROWS_AS(mppi_plan(Vec::Zero(1), identity_dynamics,
                              [](const Mat& x, const Mat&) -> RowVec {
                                return RowVec::Zero(x.cols());
                              },
                              plan, cfg),
                    std::invalid_argument);
}
