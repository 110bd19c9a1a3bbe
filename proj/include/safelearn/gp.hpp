#pragma once

#include <cmath>
#include <utility>

#include "safelearn/common.hpp"
#include "safelearn/kernel_features.hpp"

namespace safelearn {

struct GpHyper {
  Vec lengthscales;
  double kernel_variance = 1.0;
  double noise_variance = 1e-4;

  void validate(int input_dim) const {
    require(lengthscales.size() == input_dim, "GpHyper: lengthscales size mismatch");
    require((lengthscales.array() > 0.0).all(), "GpHyper: lengthscales must be positive");
    require(kernel_variance > 0.0, "GpHyper: kernel_variance must be positive");
    require(noise_variance > 0.0, "GpHyper: noise_variance must be positive");
  }
};

/// Exact GP regression with an RBF kernel, one independent output per target
/// column with shared hyperparameters. Fit cost is cubic in the data count;
/// this asymmetry against the feature-map models is measured by the timing
/// benchmarks.
class GpModel {
 public:
  GpModel() = default;

  static GpModel fit(const Mat& inputs, const Mat& targets, const GpHyper& hyper) {
    require(inputs.rows() >= 1, "GpModel::fit: need at least one data point");
    require(inputs.rows() == targets.rows(), "GpModel::fit: inputs/targets row mismatch");
    hyper.validate(static_cast<int>(inputs.cols()));
    require(inputs.allFinite() && targets.allFinite(), "GpModel::fit: non-finite data");

    GpModel model;
    model.hyper_ = hyper;
    model.scaled_inputs_ = inputs.array().rowwise() /
                           hyper.lengthscales.transpose().array();
    model.targets_ = targets;

    const Eigen::Index n = inputs.rows();
    Mat K = cross_kernel(model.scaled_inputs_, model.scaled_inputs_, hyper.kernel_variance);

    // jitter escalation keeps the factorization deterministic on
    // near-singular kernel matrices
    double jitter = 1e-10;
    while (true) {
      Mat Kn = K;
      Kn.diagonal().array() += hyper.noise_variance + jitter;
      model.llt_.compute(Kn);
      if (model.llt_.info() == Eigen::Success) break;
      jitter *= 10.0;
      if (jitter > 1e-4)
        throw std::runtime_error("GpModel::fit: kernel matrix not positive definite");
    }
    model.alpha_ = model.llt_.solve(targets);
    model.data_count_ = static_cast<long>(n);
    return model;
  }

  /// Posterior mean (one per output) and latent variance (shared across
  /// outputs, replicated) at a single query.
  std::pair<Vec, Vec> predict(const Vec& X) const {
    require(X.size() == scaled_inputs_.cols(), "GpModel::predict: dimension mismatch");
    require_finite(X, "GpModel::predict input");
    Mat q = (X.cwiseQuotient(hyper_.lengthscales)).transpose();  // 1 x d
    Mat ks = cross_kernel(scaled_inputs_, q, hyper_.kernel_variance);  // n x 1
    Vec mean = alpha_.transpose() * ks.col(0);
    Vec v = llt_.matrixL().solve(ks.col(0));
    double var = std::max(0.0, hyper_.kernel_variance - v.squaredNorm());
    return {mean, Vec::Constant(targets_.cols(), var)};
  }

  /// Posterior means for a batch of queries (one per column), no variance.
  Mat predict_mean_batch(const Mat& X) const {
    Mat q = (X.array().colwise() / hyper_.lengthscales.array()).transpose();  // R x d
    Mat ks = cross_kernel(scaled_inputs_, q, hyper_.kernel_variance);  // n x R
    return alpha_.transpose() * ks;  // outputs x R
  }

  long data_count() const { return data_count_; }
  const GpHyper& hyper() const { return hyper_; }

 private:
  static Mat cross_kernel(const Mat& a, const Mat& b, double variance) {
    // a: n x d, b: m x d, both pre-scaled by lengthscales
    Vec na = a.rowwise().squaredNorm();
    Vec nb = b.rowwise().squaredNorm();
    Mat d2 = (-2.0 * a * b.transpose());
    d2.colwise() += na;
    d2.rowwise() += nb.transpose();
    return variance * (-0.5 * d2.array()).exp().matrix();
  }

  GpHyper hyper_;
  Mat scaled_inputs_;  // n x d
  Mat targets_;        // n x outputs
  Mat alpha_;          // n x outputs
  Eigen::LLT<Mat> llt_;
  long data_count_ = 0;
};

}  // namespace safelearn
