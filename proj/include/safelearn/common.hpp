#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace safelearn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

/// Per-component box constraint on controls.
struct ControlBounds {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }

  Vec clip(const Vec& u) const {
    return u.cwiseMax(lo).cwiseMin(hi);
  }

  Mat clip_cols(const Mat& u) const {
    Mat out = u;
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      out.col(c) = out.col(c).cwiseMax(lo).cwiseMin(hi);
    return out;
  }

  void validate() const {
    if (lo.size() == 0 || lo.size() != hi.size())
      throw std::invalid_argument("ControlBounds: inconsistent sizes");
    if ((lo.array() > hi.array()).any())
      throw std::invalid_argument("ControlBounds: lo > hi");
  }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_finite(const Vec& v, const std::string& what) {
  if (!v.allFinite()) throw std::invalid_argument(what + ": non-finite entries");
}

inline void require_finite(double x, const std::string& what) {
  if (!std::isfinite(x)) throw std::invalid_argument(what + ": non-finite value");
}

/// splitmix64 step; used to derive independent seed streams from one seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(mix_seed(a, b) ^ splitmix64(c));
}

}  // namespace safelearn
