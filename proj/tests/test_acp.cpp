#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "safelearn/acp.hpp"

using namespace safelearn;

TEST_CASE("acp construction contract", "[acp]") {
  AcpState s = AcpState::init(0.05, 0.01, 300);
  REQUIRE(s.alpha() == 0.05);
  REQUIRE(s.score_count() == 0);
  REQUIRE(s.step_count() == 0);

  REQUIRE_THROWS_AS(AcpState::init(1.2, 0.01, 300), std::invalid_argument);
  REQUIRE_THROWS_AS(AcpState::init(0.05, 0.01, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(AcpState::init(0.05, -1.0, 300), std::invalid_argument);
}

TEST_CASE("nonconformity is the absolute prediction error", "[acp]") {
  REQUIRE(nonconformity(0.30, 0.25) == Catch::Approx(0.05).margin(1e-15));
  REQUIRE(nonconformity(0.7, 0.7) == 0.0);
  REQUIRE(nonconformity(-1.0, 2.0) == 3.0);
  REQUIRE_THROWS_AS(nonconformity(std::nan(""), 0.0), std::invalid_argument);
}

TEST_CASE("quantile follows the ceiling index rule", "[acp]") {
  // negligible learning rate keeps alpha pinned at 0.05 for the index checks
  AcpState s = AcpState::init(0.05, 1e-12, 400);
  for (int v = 1; v <= 19; ++v) s.update(static_cast<double>(v));
  // M = 19, r = ceil(20 * 0.95) = 19 -> largest score
  REQUIRE(s.quantile() == 19.0);

  AcpState big = AcpState::init(0.05, 1e-12, 400);  // negligible drift
  for (int v = 1; v <= 300; ++v) big.update(static_cast<double>(v));
  // M = 300, r = ceil(301 * 0.95) = 286
  REQUIRE(big.quantile() == 286.0);
}

TEST_CASE("quantile fallbacks cover the degenerate cases", "[acp]") {
  AcpConfig cfg;
  cfg.prior_radius = 0.25;
  AcpState s = AcpState::init(cfg);
  REQUIRE(s.quantile() == 0.25);  // empty buffer

  s.update(2.0);  // M = 1, r = ceil(2*0.95...) = 2 > M -> inflated maximum
  REQUIRE(s.quantile() == Catch::Approx(3.0));
}

TEST_CASE("updates follow the failure-rate recursion", "[acp]") {
  AcpState covered = AcpState::init(0.05, 0.01, 300);
  covered.update(0.05);  // below the prior radius 0.1 -> e = 0
  REQUIRE(covered.alpha() == Catch::Approx(0.05 + 0.01 * 0.05).margin(1e-15));

  AcpState missed = AcpState::init(0.05, 0.01, 300);
  missed.update(0.5);  // above the prior radius -> e = 1
  REQUIRE(missed.alpha() == Catch::Approx(0.05 + 0.01 * (0.05 - 1.0)).margin(1e-15));

  REQUIRE_THROWS_AS(missed.update(-1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(missed.update(std::nan("")), std::invalid_argument);
}

TEST_CASE("persistent coverage pins alpha at the clamp", "[acp]") {
  AcpState s = AcpState::init(0.05, 0.01, 50);
  for (int i = 0; i < 1000; ++i) s.update(0.0);
  REQUIRE(s.alpha() == 0.5);
  REQUIRE(s.score_count() == 50);  // window eviction
  REQUIRE(s.step_count() == 1000);
}

TEST_CASE("update magnitude is bounded by the learning rate", "[acp]") {
  AcpState s = AcpState::init(0.1, 0.02, 100);
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> expo(4.0);
  const double bound = 0.02 * std::max(0.1, 0.9) + 1e-15;
  for (int i = 0; i < 500; ++i) {
    const double before = s.alpha();
    s.update(expo(rng));
    REQUIRE(std::abs(s.alpha() - before) <= bound);
  }
}

TEST_CASE("the quantile is always a buffered score or the fallback", "[acp]") {
  AcpState s = AcpState::init(0.1, 0.05, 64);
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> expo(2.0);
  std::vector<double> seen;
  for (int i = 0; i < 300; ++i) {
    const double score = expo(rng);
    seen.push_back(score);
    s.update(score);
    const double q = s.quantile();
    const auto begin = seen.size() > 64 ? seen.end() - 64 : seen.begin();
    const bool in_buffer = std::find(begin, seen.end(), q) != seen.end();
    const double inflated = 1.5 * *std::max_element(begin, seen.end());
    REQUIRE((in_buffer || q == Catch::Approx(inflated)));
  }
}

TEST_CASE("long-run miss rate tracks the target", "[acp]") {
  AcpState s = AcpState::init(0.05, 0.01, 300);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int steps = 4000;
  double misses = 0.0;
  for (int i = 0; i < steps; ++i) misses += s.update(std::abs(gauss(rng)));
  REQUIRE(std::abs(misses / steps - 0.05) < 0.03);
}
