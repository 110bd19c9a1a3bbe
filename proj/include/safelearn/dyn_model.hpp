#pragma once

#include <memory>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "safelearn/common.hpp"
#include "safelearn/kernel_features.hpp"

namespace safelearn {

/// One observed residual transition: d = x_next - nominal(x, u).
struct ResidualSample {
  Vec x;
  Vec u;
  Vec d;
};

using ResidualDataset = std::vector<ResidualSample>;

struct WeightSample {
  Mat weights;  // state_dim x realized feature dim
  std::uint64_t seed = 0;
};

inline Vec predict_residual(const Mat& weights, const FeatureMap& featmap,
                            const Vec& x, const Vec& u) {
  Vec phi = featmap.features(x, u);
  require(weights.cols() == phi.size(), "predict_residual: weight/feature size mismatch");
  return weights * phi;
}

/// Bayesian-flavoured linear model over a fixed feature map. Keeps the
/// sufficient statistics
///   precision = ridge * I + sum phi phi^T
///   moment    = sum phi d^T
/// so an incremental refit after each episode matches a from-scratch solve.
class LinearDynModel {
 public:
  LinearDynModel() = default;

  static LinearDynModel init_from_safe_dataset(std::shared_ptr<const FeatureMap> featmap,
                                               const ResidualDataset& dataset,
                                               double ridge) {
    require(featmap != nullptr, "LinearDynModel: null feature map");
    require(!dataset.empty(), "LinearDynModel: safe dataset must be nonempty");
    require(ridge > 0.0, "LinearDynModel: ridge must be positive");

    LinearDynModel model;
    model.featmap_ = std::move(featmap);
    const int p = model.featmap_->realized_dim();
    const int n = static_cast<int>(dataset.front().d.size());
    model.state_dim_ = n;
    model.ridge_ = ridge;
    model.precision_ = ridge * Mat::Identity(p, p);
    model.moment_ = Mat::Zero(p, n);
    model.mean_weights_ = Mat::Zero(n, p);
    model.fit_ridge(dataset);
    return model;
  }

  void fit_ridge(const ResidualDataset& increment) {
    require(featmap_ != nullptr, "LinearDynModel: not initialized");
    if (increment.empty()) return;
    for (const auto& s : increment) {
      require(s.d.size() == state_dim_, "fit_ridge: target dimension mismatch");
      require(s.x.allFinite() && s.u.allFinite() && s.d.allFinite(),
              "fit_ridge: non-finite observation");
      Vec phi = featmap_->features(s.x, s.u);
      precision_.selfadjointView<Eigen::Lower>().rankUpdate(phi);
      moment_.noalias() += phi * s.d.transpose();
      ++data_count_;
    }
    precision_ = precision_.selfadjointView<Eigen::Lower>();
    solve_weights();
  }

  /// One Gaussian hypothesis: each row of the sample is drawn independently
  /// with mean the matching mean-weight row and covariance precision^{-1}.
  WeightSample thompson_sample(std::uint64_t seed) const {
    require(featmap_ != nullptr, "LinearDynModel: not initialized");
    Eigen::LLT<Mat> llt = factorize_precision();
    const int p = static_cast<int>(precision_.rows());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    WeightSample out;
    out.seed = seed;
    out.weights = mean_weights_;
    Vec z(p);
    for (int i = 0; i < state_dim_; ++i) {
      for (int j = 0; j < p; ++j) z(j) = normal(rng);
      // cov(U^{-1} z) = (U^T U)^{-1} = precision^{-1}
      out.weights.row(i) += llt.matrixU().solve(z).transpose();
    }
    return out;
  }

  Vec predict(const Vec& x, const Vec& u) const {
    return predict_residual(mean_weights_, *featmap_, x, u);
  }

  const Mat& mean_weights() const { return mean_weights_; }
  const Mat& precision() const { return precision_; }
  double ridge() const { return ridge_; }
  long data_count() const { return data_count_; }
  int state_dim() const { return state_dim_; }
  const FeatureMap& feature_map() const { return *featmap_; }
  std::shared_ptr<const FeatureMap> feature_map_ptr() const { return featmap_; }

  nlohmann::json to_json() const;
  static LinearDynModel from_json(const nlohmann::json& j);

 private:
  void solve_weights() {
    Eigen::LLT<Mat> llt = factorize_precision();
    mean_weights_ = llt.solve(moment_).transpose();
  }

  Eigen::LLT<Mat> factorize_precision() const {
    double jitter = 0.0;
    while (true) {
      Mat p = precision_;
      if (jitter > 0.0) p.diagonal().array() += jitter;
      Eigen::LLT<Mat> llt(p);
      if (llt.info() == Eigen::Success) return llt;
      jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
      if (jitter > 1e-4)
        throw std::runtime_error("LinearDynModel: precision factorization failed");
    }
  }

  std::shared_ptr<const FeatureMap> featmap_;
  Mat mean_weights_;  // n x p
  Mat precision_;     // p x p
  Mat moment_;        // p x n
  double ridge_ = 1.0;
  long data_count_ = 0;
  int state_dim_ = 0;
};

namespace detail {

inline nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.size();
  if (rows == 0) return Mat();
  const auto cols = j.at(0).size();
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

inline nlohmann::json vector_to_json(const Vec& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Vec vector_from_json(const nlohmann::json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json LinearDynModel::to_json() const {
  nlohmann::json j;
  j["type"] = "linear";
  j["feature_config"] = {
      {"input_dim", featmap_->config.input_dim},
      {"feature_count", featmap_->config.feature_count},
      {"lengthscales", detail::vector_to_json(featmap_->config.lengthscales)},
      {"kernel_variance", featmap_->config.kernel_variance},
      {"kind", featmap_->config.kind == FeatureKind::QFF ? "qff" : "rff"},
      {"seed", featmap_->config.seed},
  };
  j["realized_dim"] = featmap_->realized_dim();
  j["state_dim"] = state_dim_;
  j["ridge"] = ridge_;
  j["data_count"] = data_count_;
  j["mean_weights"] = detail::matrix_to_json(mean_weights_);
  j["precision"] = detail::matrix_to_json(precision_);
  j["moment"] = detail::matrix_to_json(moment_);
  return j;
}

inline LinearDynModel LinearDynModel::from_json(const nlohmann::json& j) {
  FeatureConfig cfg;
  const auto& fc = j.at("feature_config");
  cfg.input_dim = fc.at("input_dim").get<int>();
  cfg.feature_count = fc.at("feature_count").get<int>();
  cfg.lengthscales = detail::vector_from_json(fc.at("lengthscales"));
  cfg.kernel_variance = fc.at("kernel_variance").get<double>();
  cfg.kind = fc.at("kind").get<std::string>() == "qff" ? FeatureKind::QFF : FeatureKind::RFF;
  cfg.seed = fc.at("seed").get<std::uint64_t>();

  LinearDynModel model;
  model.featmap_ = std::make_shared<const FeatureMap>(build_feature_map(cfg));
  require(model.featmap_->realized_dim() == j.at("realized_dim").get<int>(),
          "LinearDynModel::from_json: rebuilt feature map dimension mismatch");
  model.state_dim_ = j.at("state_dim").get<int>();
  model.ridge_ = j.at("ridge").get<double>();
  model.data_count_ = j.at("data_count").get<long>();
  model.mean_weights_ = detail::matrix_from_json(j.at("mean_weights"));
  model.precision_ = detail::matrix_from_json(j.at("precision"));
  model.moment_ = detail::matrix_from_json(j.at("moment"));
  return model;
}

}  // namespace safelearn
