#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "safelearn/common.hpp"
#include "safelearn/envs.hpp"

namespace safelearn {

/// B(x, u): barrier value at the model-predicted next state, discounted by
/// the decay term on the current state.
inline double predicted_barrier(const Vec& x, const Vec& u,
                                const std::function<Vec(const Vec&, const Vec&)>& nominal,
                                const std::function<Vec(const Vec&, const Vec&)>& d_pred,
                                const BarrierSpec& spec) {
  Vec next = nominal(x, u) + d_pred(x, u);
  require_finite(next, "predicted_barrier: predicted next state");
  const double hx = spec.h(x);
  const double hn = spec.h(next);
  require_finite(hx, "predicted_barrier: h(x)");
  require_finite(hn, "predicted_barrier: h(next)");
  return hn - (1.0 - spec.gamma) * hx;
}

/// B*(x, u): realized barrier value computed a posteriori from the observed
/// next state.
inline double realized_barrier(const Vec& x, const Vec& x_next, const BarrierSpec& spec) {
  const double hx = spec.h(x);
  const double hn = spec.h(x_next);
  require_finite(hx, "realized_barrier: h(x)");
  require_finite(hn, "realized_barrier: h(x_next)");
  return hn - (1.0 - spec.gamma) * hx;
}

struct FilterResult {
  Vec u_safe;
  bool feasible = true;
  double margin = 0.0;     // -radius + B at u_safe
  double deviation = 0.0;  // ||u_safe - u_ref||
};

struct FilterOptions {
  int grid_per_dim = 41;
  int refine_iterations = 100;
  double control_tol = 1e-6;
};

using BarrierFn = std::function<double(const Vec&)>;
using BarrierBatchFn = std::function<RowVec(const Mat&)>;

namespace detail {

inline std::vector<Vec> pattern_directions(int m) {
  std::vector<Vec> dirs;
  int count = 1;
  for (int i = 0; i < m; ++i) count *= 3;
  for (int c = 0; c < count; ++c) {
    Vec d(m);
    int rem = c;
    for (int i = 0; i < m; ++i) {
      d(i) = static_cast<double>(rem % 3 - 1);
      rem /= 3;
    }
    if (d.cwiseAbs().maxCoeff() > 0.5) dirs.push_back(d);
  }
  return dirs;
}

/// Last feasible point on the segment from a feasible anchor toward the
/// (infeasible) reference.
inline Vec bisect_toward(const Vec& feasible, const Vec& target, const BarrierFn& g) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    Vec c = feasible + mid * (target - feasible);
    if (g(c) >= 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return feasible + lo * (target - feasible);
}

inline Vec gradient_fd(const BarrierFn& g, const Vec& u, const ControlBounds& bounds) {
  const int m = static_cast<int>(u.size());
  Vec grad(m);
  for (int i = 0; i < m; ++i) {
    const double step = 1e-7 * std::max(1.0, bounds.hi(i) - bounds.lo(i));
    Vec up = u, dn = u;
    up(i) += step;
    dn(i) -= step;
    grad(i) = (g(up) - g(dn)) / (2.0 * step);
  }
  return grad;
}

}  // namespace detail

/// Projects the reference control onto {u in box : B(u) >= radius}. Stage one
/// is a deterministic coarse grid over the box; stage two refines the best
/// feasible candidate by moving toward the reference, sliding along the
/// constraint surface, and halving the step when stuck. When the constraint
/// is infeasible over the whole box the max-margin control is returned with
/// feasible=false. All accepted feasible points are verified in double
/// precision, so feasible results satisfy the constraint to solver slack.
inline FilterResult filter_control(const Vec& u_ref_in, const BarrierFn& barrier,
                                   double radius, const ControlBounds& bounds,
                                   const FilterOptions& opts = {},
                                   const BarrierBatchFn& barrier_batch = nullptr) {
  bounds.validate();
  require_finite(u_ref_in, "filter_control: u_ref");
  require_finite(radius, "filter_control: radius");
  require(radius >= 0.0, "filter_control: radius must be nonnegative");

  const Vec u_ref = bounds.clip(u_ref_in);
  auto g = [&](const Vec& u) { return barrier(u) - radius; };

  if (g(u_ref) >= 0.0) {
    return {u_ref, true, g(u_ref), 0.0};
  }

  const int m = bounds.dim();
  const int gp = std::max(2, opts.grid_per_dim);
  Vec spacing(m);
  for (int i = 0; i < m; ++i) spacing(i) = (bounds.hi(i) - bounds.lo(i)) / (gp - 1);

  // stage one: coarse grid
  long total = 1;
  for (int i = 0; i < m; ++i) total *= gp;
  Mat grid(m, total);
  std::vector<int> idx(m, 0);
  for (long c = 0; c < total; ++c) {
    for (int i = 0; i < m; ++i) grid(i, c) = bounds.lo(i) + idx[i] * spacing(i);
    for (int i = m - 1; i >= 0; --i) {
      if (++idx[i] < gp) break;
      idx[i] = 0;
    }
  }
  RowVec gvals(total);
  if (barrier_batch) {
    gvals = barrier_batch(grid).array() - radius;
  } else {
    for (long c = 0; c < total; ++c) gvals(c) = g(grid.col(c));
  }

  long best_feasible = -1, best_margin_idx = 0;
  double best_dev2 = std::numeric_limits<double>::infinity();
  double best_margin = -std::numeric_limits<double>::infinity();
  for (long c = 0; c < total; ++c) {
    const double gv = gvals(c);
    if (gv > best_margin) {
      best_margin = gv;
      best_margin_idx = c;
    }
    if (gv >= 0.0) {
      const double dev2 = (grid.col(c) - u_ref).squaredNorm();
      if (dev2 < best_dev2) {
        best_dev2 = dev2;
        best_feasible = c;
      }
    }
  }

  const auto dirs = detail::pattern_directions(m);

  auto refine_feasible = [&](Vec u) {
    // authoritative double-precision check of the batch-ranked seed
    if (g(u) < 0.0) return std::pair<Vec, bool>{u, false};
    Vec rho = spacing;
    double dev = (u - u_ref).norm();
    for (int it = 0; it < opts.refine_iterations && rho.maxCoeff() > opts.control_tol; ++it) {
      bool improved = false;

      Vec cand = detail::bisect_toward(u, u_ref, g);
      double cdev = (cand - u_ref).norm();
      if (g(cand) >= 0.0 && cdev < dev - 1e-15) {
        u = cand;
        dev = cdev;
        improved = true;
      }

      Vec step_best = u;
      double step_dev = dev;
      for (const Vec& d : dirs) {
        Vec c = bounds.clip(u + rho.cwiseProduct(d));
        const double dv = (c - u_ref).norm();
        if (dv < step_dev - 1e-15 && g(c) >= 0.0) {
          step_best = c;
          step_dev = dv;
        }
      }
      if (step_dev < dev - 1e-15) {
        u = step_best;
        dev = step_dev;
        improved = true;
      }

      if (m >= 2) {
        // slide along the active constraint surface toward the reference
        Vec grad = detail::gradient_fd(g, u, bounds);
        const double gn = grad.norm();
        if (gn > 1e-12) {
          Vec toward = u_ref - u;
          Vec tangent = toward - (toward.dot(grad) / (gn * gn)) * grad;
          const double tn = tangent.norm();
          if (tn > 1e-12) {
            Vec c = bounds.clip(u + rho.minCoeff() * tangent / tn);
            for (int k = 0; k < 5 && g(c) < 0.0; ++k) {
              Vec gc = detail::gradient_fd(g, c, bounds);
              const double gcn2 = gc.squaredNorm();
              if (gcn2 < 1e-24) break;
              c = bounds.clip(c - (g(c) * 1.02 / gcn2) * gc);
            }
            const double dv = (c - u_ref).norm();
            if (g(c) >= 0.0 && dv < dev - 1e-15) {
              u = c;
              dev = dv;
              improved = true;
            }
          }
        }
      }

      if (!improved) rho *= 0.5;
    }
    return std::pair<Vec, bool>{u, true};
  };

  if (best_feasible >= 0) {
    auto [u, ok] = refine_feasible(grid.col(best_feasible));
    if (ok) return {u, true, g(u), (u - u_ref).norm()};
  }

  // no feasible point found: maximize the margin instead
  Vec u = grid.col(best_margin_idx);
  double gu = g(u);
  Vec rho = spacing;
  for (int it = 0; it < opts.refine_iterations && rho.maxCoeff() > opts.control_tol; ++it) {
    bool improved = false;
    for (const Vec& d : dirs) {
      Vec c = bounds.clip(u + rho.cwiseProduct(d));
      const double gc = g(c);
      if (gc > gu + 1e-15) {
        u = c;
        gu = gc;
        improved = true;
      }
    }
    if (!improved) rho *= 0.5;
  }
  if (gu >= 0.0) {
    // refinement crossed into feasibility after all
    auto [uf, ok] = refine_feasible(u);
    if (ok) return {uf, true, g(uf), (uf - u_ref).norm()};
  }
  return {u, false, gu, (u - u_ref).norm()};
}

/// Convenience wrapper assembling B(x, u) from the nominal model, a learned
/// residual predictor and the barrier spec.
inline FilterResult filter_control(
    const Vec& u_ref, const Vec& x,
    const std::function<Vec(const Vec&, const Vec&)>& nominal,
    const std::function<Vec(const Vec&, const Vec&)>& d_pred, const BarrierSpec& spec,
    double radius, const ControlBounds& bounds, const FilterOptions& opts = {},
    const BarrierBatchFn& barrier_batch = nullptr) {
  spec.validate();
  auto b = [&](const Vec& u) { return predicted_barrier(x, u, nominal, d_pred, spec); };
  return filter_control(u_ref, b, radius, bounds, opts, barrier_batch);
}

}  // namespace safelearn
