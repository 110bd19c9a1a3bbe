#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

#include "safelearn/common.hpp"

namespace safelearn {

enum class FeatureKind { QFF, RFF };

/// Configuration of a Fourier feature map approximating an RBF kernel
///   k(X, X') = kernel_variance * exp(-0.5 * sum_i ((X_i - X'_i) / lengthscale_i)^2).
struct FeatureConfig {
  int input_dim = 1;
  int feature_count = 200;  // requested number of frequencies (QFF nodes / RFF draws)
  Vec lengthscales;         // one per input dimension, all > 0
  double kernel_variance = 1.0;
  FeatureKind kind = FeatureKind::QFF;
  std::uint64_t seed = 0;  // RFF only

  void validate() const {
    require(input_dim >= 1, "FeatureConfig: input_dim must be >= 1");
    require(feature_count >= 1, "FeatureConfig: feature_count must be >= 1");
    require(lengthscales.size() == input_dim,
            "FeatureConfig: lengthscales size must equal input_dim");
    require((lengthscales.array() > 0.0).all(),
            "FeatureConfig: lengthscales must be positive");
    require(kernel_variance > 0.0, "FeatureConfig: kernel_variance must be positive");
  }
};

/// Closed-form RBF kernel; the accuracy oracle for both feature constructions.
inline double rbf_kernel(const Vec& a, const Vec& b, const Vec& lengthscales,
                         double kernel_variance) {
  const Vec r = (a - b).cwiseQuotient(lengthscales);
  return kernel_variance * std::exp(-0.5 * r.squaredNorm());
}

/// Gauss-Hermite rule for weight e^{-z^2}: nodes from the Jacobi matrix
/// eigenvalues, weights from the Christoffel sum of orthonormal Hermite
/// polynomials evaluated with an e^{-z^2/2} damping factor so that the
/// recurrence stays representable at extreme nodes (weights there underflow
/// to 0, matching their true magnitude).
inline std::pair<Vec, Vec> gauss_hermite(int order) {
  require(order >= 1, "gauss_hermite: order must be >= 1");
  Vec nodes(order), weights(order);
  if (order == 1) {
    nodes(0) = 0.0;
    weights(0) = std::sqrt(M_PI);
    return {nodes, weights};
  }
  Vec diag = Vec::Zero(order);
  Vec sub(order - 1);
  for (int k = 1; k < order; ++k) sub(k - 1) = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Mat> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  nodes = es.eigenvalues();

  const double p0 = std::pow(M_PI, -0.25);
  for (int j = 0; j < order; ++j) {
    const double z = nodes(j);
    double q_prev = 0.0;
    double q = p0 * std::exp(-0.5 * z * z);
    double sum = q * q;
    for (int k = 1; k < order; ++k) {
      const double q_next = std::sqrt(2.0 / k) * z * q - std::sqrt((k - 1.0) / k) * q_prev;
      q_prev = q;
      q = q_next;
      sum += q * q;
    }
    weights(j) = sum > 0.0 ? std::exp(-z * z) / sum : 0.0;
  }
  return {nodes, weights};
}

/// Finite trigonometric feature map phi with phi(X)^T phi(X') ~= k(X, X').
/// Layout: rows [0, M) are cosine channels, rows [M, 2M) the matching sine
/// channels, each scaled by the square root of its frequency weight.
struct FeatureMap {
  FeatureConfig config;
  Mat frequencies;  // M x input_dim
  Vec weights;      // M, nonnegative, sum to ~kernel_variance for QFF
  Vec scales;       // sqrt(weights)

  // float mirrors for the batched planner path
  Eigen::MatrixXf frequencies_f;
  Eigen::VectorXf scales_f;

  int node_count() const { return static_cast<int>(frequencies.rows()); }
  int realized_dim() const { return 2 * node_count(); }

  void finalize() {
    scales = weights.cwiseSqrt();
    frequencies_f = frequencies.cast<float>();
    scales_f = scales.cast<float>();
  }

  Vec eval(const Vec& X) const {
    require(X.size() == config.input_dim, "FeatureMap::eval: input dimension mismatch");
    require_finite(X, "FeatureMap::eval input");
    const int m = node_count();
    const Vec angles = frequencies * X;
    Vec out(2 * m);
    for (int j = 0; j < m; ++j) {
      out(j) = scales(j) * std::cos(angles(j));
      out(m + j) = scales(j) * std::sin(angles(j));
    }
    return out;
  }

  Vec features(const Vec& x, const Vec& u) const {
    Vec X(x.size() + u.size());
    X << x, u;
    return eval(X);
  }

  /// Batched evaluation, one input per column.
  Mat eval_batch(const Mat& X) const {
    require(X.rows() == config.input_dim, "FeatureMap::eval_batch: input dimension mismatch");
    const int m = node_count();
    Mat angles = frequencies * X;
    Mat out(2 * m, X.cols());
    out.topRows(m) = angles.array().cos().colwise() * scales.array();
    out.bottomRows(m) = angles.array().sin().colwise() * scales.array();
    return out;
  }

  /// Single-precision batch path; used inside sampling-based planning where
  /// rollout noise dwarfs float rounding.
  Eigen::MatrixXf eval_batch_f(const Eigen::MatrixXf& X) const {
    const int m = node_count();
    Eigen::MatrixXf angles = frequencies_f * X;
    Eigen::MatrixXf out(2 * m, X.cols());
    out.topRows(m) = angles.array().cos().colwise() * scales_f.array();
    out.bottomRows(m) = angles.array().sin().colwise() * scales_f.array();
    return out;
  }
};

/// Largest per-dimension order m with m^dim <= requested.
inline int qff_order_per_dim(int requested, int dim) {
  int order = 0;
  while (true) {
    double next = std::pow(static_cast<double>(order + 1), dim);
    if (next > static_cast<double>(requested) + 0.5) break;
    ++order;
  }
  return order;
}

/// Tensor-product Gauss-Hermite construction. The realized node count is
/// order^dim with order the largest integer whose power fits the requested
/// feature_count; the realized vector length (cos+sin) is reported on the map.
inline FeatureMap build_qff(const FeatureConfig& config) {
  config.validate();
  require(config.kind == FeatureKind::QFF, "build_qff: config.kind must be QFF");
  const int d = config.input_dim;
  const int order = qff_order_per_dim(config.feature_count, d);
  require(order >= 1,
          "build_qff: feature_count " + std::to_string(config.feature_count) +
              " is not realizable as a tensor-product node count in dimension " +
              std::to_string(d));

  auto [nodes, gh_weights] = gauss_hermite(order);
  const double norm = std::sqrt(M_PI);

  long total = 1;
  for (int i = 0; i < d; ++i) total *= order;

  FeatureMap map;
  map.config = config;
  map.frequencies.resize(total, d);
  map.weights.resize(total);

  std::vector<int> idx(d, 0);
  for (long row = 0; row < total; ++row) {
    double w = config.kernel_variance;
    for (int i = 0; i < d; ++i) {
      map.frequencies(row, i) = std::sqrt(2.0) * nodes(idx[i]) / config.lengthscales(i);
      w *= gh_weights(idx[i]) / norm;
    }
    map.weights(row) = w;
    for (int i = d - 1; i >= 0; --i) {
      if (++idx[i] < order) break;
      idx[i] = 0;
    }
  }
  map.finalize();
  return map;
}

/// Monte-Carlo spectral construction: frequencies drawn i.i.d. from the RBF
/// spectral density N(0, diag(1/lengthscale^2)); deterministic per seed.
inline FeatureMap build_rff(const FeatureConfig& config) {
  config.validate();
  require(config.kind == FeatureKind::RFF, "build_rff: config.kind must be RFF");
  const int d = config.input_dim;
  const int m = config.feature_count;

  FeatureMap map;
  map.config = config;
  map.frequencies.resize(m, d);
  map.weights = Vec::Constant(m, config.kernel_variance / m);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < d; ++i)
      map.frequencies(j, i) = normal(rng) / config.lengthscales(i);
  map.finalize();
  return map;
}

inline FeatureMap build_feature_map(const FeatureConfig& config) {
  return config.kind == FeatureKind::QFF ? build_qff(config) : build_rff(config);
}

}  // namespace safelearn
