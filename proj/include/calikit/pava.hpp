#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "calikit/errors.hpp"

namespace calikit {

// Weighted 1-D isotonic regression instance: fit non-decreasing values over
// the ordering of x. Weights must be positive.
struct IsotonicInstance {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> w;  // empty means unit weights
};

struct StepBlock {
  double lower = 0.0;   // smallest member x
  double upper = 0.0;   // largest member x
  double fit = 0.0;
  double weight = 0.0;  // total member weight
  std::size_t count = 0;  // number of member points
};

// Right-continuous step function induced by the fitted blocks. Between two
// blocks the value of the lower block extends rightward; below the first
// block domain_floor applies (defaults to the first block's fit).
struct StepFunction {
  std::vector<StepBlock> blocks;
  double domain_floor = 0.0;

  double eval(double x) const {
    // last block whose lower edge is <= x
    std::size_t lo = 0, hi = blocks.size();
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (blocks[mid].lower <= x)
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo == 0) return domain_floor;
    return blocks[lo - 1].fit;
  }
};

inline double step_eval(const StepFunction& f, double x) { return f.eval(x); }

namespace detail {

// Pool-adjacent-violators over points already sorted by x and pre-pooled for
// ties. Inputs are per-point weighted target sums (wy) and weights (w);
// outputs are block start indices (with end sentinel) and block means.
// Merging happens only on strict violations, so runs of equal means stay as
// separate blocks.
inline void pava_pooled(const std::vector<double>& wy,
                        const std::vector<double>& w,
                        std::vector<std::size_t>& starts,
                        std::vector<double>& fits) {
  const std::size_t n = wy.size();
  starts.clear();
  fits.clear();
  std::vector<double> bwy, bw;
  bwy.reserve(n);
  bw.reserve(n);
  starts.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    bwy.push_back(wy[i]);
    bw.push_back(w[i]);
    starts.push_back(i);
    while (bwy.size() > 1) {
      std::size_t t = bwy.size() - 1;
      if (bwy[t - 1] * bw[t] > bwy[t] * bw[t - 1]) {  // mean[t-1] > mean[t]
        bwy[t - 1] += bwy[t];
        bw[t - 1] += bw[t];
        bwy.pop_back();
        bw.pop_back();
        starts.pop_back();
      } else {
        break;
      }
    }
  }
  starts.push_back(n);
  fits.resize(bwy.size());
  for (std::size_t b = 0; b < bwy.size(); ++b) fits[b] = bwy[b] / bw[b];
}

struct PooledPoints {
  std::vector<double> x;    // strictly increasing
  std::vector<double> wy;   // summed weighted targets per distinct x
  std::vector<double> w;    // summed weights per distinct x
  std::vector<std::size_t> point_of;  // original index -> pooled index
};

inline PooledPoints pool_by_x(const IsotonicInstance& inst) {
  const std::size_t n = inst.x.size();
  if (n == 0) throw CalibError(ErrorKind::EmptyInstance, "isotonic instance with no points");
  if (inst.y.size() != n || (!inst.w.empty() && inst.w.size() != n))
    throw CalibError(ErrorKind::ShapeMismatch, "isotonic instance arrays disagree in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(inst.x[i]) || !std::isfinite(inst.y[i]))
      throw CalibError(ErrorKind::NonFiniteEntry, "isotonic instance point " + std::to_string(i));
    if (!inst.w.empty() && !(inst.w[i] > 0.0))
      throw CalibError(ErrorKind::NonPositiveFit,
                       "weight " + std::to_string(inst.w[i]) + " at point " + std::to_string(i));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return inst.x[a] < inst.x[b]; });
  PooledPoints pp;
  pp.point_of.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t i = order[r];
    double wi = inst.w.empty() ? 1.0 : inst.w[i];
    if (!pp.x.empty() && inst.x[i] == pp.x.back()) {
      pp.wy.back() += wi * inst.y[i];
      pp.w.back() += wi;
    } else {
      pp.x.push_back(inst.x[i]);
      pp.wy.push_back(wi * inst.y[i]);
      pp.w.push_back(wi);
    }
    pp.point_of[i] = pp.x.size() - 1;
  }
  return pp;
}

}  // namespace detail

// Isotonic least squares via pool-adjacent-violators. Points tied in x are
// pooled first so the result is a well-defined function of x. The same block
// fits minimize every Bregman divergence of a proper scoring rule, log loss
// included, which is what the flat calibrators rely on.
inline StepFunction pava_fit(const IsotonicInstance& inst) {
  detail::PooledPoints pp = detail::pool_by_x(inst);
  std::vector<std::size_t> starts;
  std::vector<double> fits;
  detail::pava_pooled(pp.wy, pp.w, starts, fits);
  StepFunction f;
  f.blocks.resize(fits.size());
  for (std::size_t b = 0; b < fits.size(); ++b) {
    StepBlock& blk = f.blocks[b];
    blk.lower = pp.x[starts[b]];
    blk.upper = pp.x[starts[b + 1] - 1];
    blk.fit = fits[b];
    blk.weight = 0.0;
    blk.count = starts[b + 1] - starts[b];
    double wy = 0.0;
    for (std::size_t p = starts[b]; p < starts[b + 1]; ++p) {
      blk.weight += pp.w[p];
      wy += pp.wy[p];
    }
    // block value must be the weighted mean of its members
    if (std::fabs(blk.fit * blk.weight - wy) >
        1e-9 * (std::fabs(wy) + blk.weight))
      throw std::logic_error("pava block mean invariant violated");
  }
  f.domain_floor = f.blocks.front().fit;
  return f;
}

// Brute-force isotonic solution from the classical min-max window formula:
//   fit_i = min over upper ends l >= i of max over lower ends u <= i of
//           weighted mean of y[u..l]
// evaluated over the distinct sorted x values, with ties in x pooled first so
// the result is the same function-of-x object pava_fit produces. Cubic time;
// intended as an independent check for small instances (n up to ~2000).
inline std::vector<double> minmax_oracle(const IsotonicInstance& inst) {
  detail::PooledPoints pp = detail::pool_by_x(inst);
  const std::size_t n = pp.x.size();
  std::vector<double> pw(n + 1, 0.0), pwy(n + 1, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    pw[r + 1] = pw[r] + pp.w[r];
    pwy[r + 1] = pwy[r] + pp.wy[r];
  }
  std::vector<double> fit_pooled(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = i; l < n; ++l) {
      double worst = -std::numeric_limits<double>::infinity();
      for (std::size_t u = 0; u <= i; ++u) {
        double mean = (pwy[l + 1] - pwy[u]) / (pw[l + 1] - pw[u]);
        if (mean > worst) worst = mean;
      }
      if (worst < best) best = worst;
    }
    fit_pooled[i] = best;
  }
  std::vector<double> out(inst.x.size());
  for (std::size_t p = 0; p < inst.x.size(); ++p)
    out[p] = fit_pooled[pp.point_of[p]];
  return out;
}

}  // namespace calikit
