#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "safelearn/common.hpp"

namespace safelearn {

/// |realized - predicted| nonconformity of the barrier predictor.
inline double nonconformity(double b_pred, double b_true) {
  require_finite(b_pred, "nonconformity: predicted value");
  require_finite(b_true, "nonconformity: realized value");
  return std::abs(b_true - b_pred);
}

struct AcpConfig {
  double alpha_target = 0.05;
  double learn_rate = 0.01;
  int window = 300;
  double prior_radius = 0.1;  // quantile before any score arrives
  double alpha_min = 0.001;
  double alpha_max = 0.5;

  void validate() const {
    require(alpha_target > 0.0 && alpha_target < 1.0,
            "AcpConfig: alpha_target must lie in (0, 1)");
    require(learn_rate > 0.0, "AcpConfig: learn_rate must be positive");
    require(window >= 1, "AcpConfig: window must be >= 1");
    require(prior_radius >= 0.0, "AcpConfig: prior_radius must be nonnegative");
    require(alpha_min > 0.0 && alpha_max < 1.0 && alpha_min <= alpha_max,
            "AcpConfig: clamp range must satisfy 0 < alpha_min <= alpha_max < 1");
  }
};

/// Online failure-rate iterate over a bounded FIFO of nonconformity scores.
/// Single-writer state machine; updates are strictly ordered by time step.
class AcpState {
 public:
  AcpState() = default;

  static AcpState init(double alpha_target, double learn_rate, int window) {
    AcpConfig cfg;
    cfg.alpha_target = alpha_target;
    cfg.learn_rate = learn_rate;
    cfg.window = window;
    return init(cfg);
  }

  static AcpState init(const AcpConfig& cfg) {
    cfg.validate();
    AcpState s;
    s.cfg_ = cfg;
    s.alpha_ = cfg.alpha_target;
    return s;
  }

  /// Running quantile S^(r) with r = ceil((M+1)(1-alpha)) over the M buffered
  /// scores; falls back to an inflated maximum when r exceeds M and to the
  /// configured prior radius when the buffer is empty.
  double quantile() const {
    const int m = static_cast<int>(scores_.size());
    if (m == 0) return cfg_.prior_radius;
    const double raw = std::ceil((m + 1) * (1.0 - alpha_) - 1e-9);
    const int r = std::max(1, static_cast<int>(raw));
    if (r > m) return 1.5 * *std::max_element(scores_.begin(), scores_.end());
    std::vector<double> tmp(scores_.begin(), scores_.end());
    std::nth_element(tmp.begin(), tmp.begin() + (r - 1), tmp.end());
    return tmp[r - 1];
  }

  /// One calibration step: the coverage indicator is judged against the
  /// quantile of the scores seen so far (pre-insert), then the new score
  /// enters the buffer. Returns e_k (0 covered, 1 missed).
  double update(double score) {
    require_finite(score, "AcpState::update score");
    require(score >= 0.0, "AcpState::update: score must be nonnegative");
    const double q = quantile();
    const double e = score <= q ? 0.0 : 1.0;
    alpha_ = std::clamp(alpha_ + cfg_.learn_rate * (cfg_.alpha_target - e),
                        cfg_.alpha_min, cfg_.alpha_max);
    scores_.push_back(score);
    if (static_cast<int>(scores_.size()) > cfg_.window) scores_.pop_front();
    ++step_count_;
    return e;
  }

  double alpha() const { return alpha_; }
  int score_count() const { return static_cast<int>(scores_.size()); }
  long step_count() const { return step_count_; }
  const AcpConfig& config() const { return cfg_; }

 private:
  AcpConfig cfg_;
  double alpha_ = 0.05;
  std::deque<double> scores_;
  long step_count_ = 0;
};

}  // namespace safelearn
