#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "calikit/core.hpp"
#include "calikit/parallel.hpp"

namespace calikit {

// One aggregated point of the cumulative construction: q is a top-r
// probability sum, rank is r (1..k-1), y the mean cumulative hit indicator,
// w the integer multiplicity collected by deduplication.
struct CumulativePoint {
  double q = 0.0;
  int rank = 0;
  double y = 0.0;
  double w = 0.0;
};

// Identical q values can differ by float noise after summation; points whose
// q agree to this tolerance (and whose rank matches) are merged.
inline constexpr double kCumulativeMergeTol = 1e-12;

// For every sample, sort predictions descending (ties broken by ascending
// class index) and emit (top-r sum, r) with a binary target saying whether
// the label landed in the top r, for r = 1..k-1. The pooled points are then
// stably sorted by (q, rank) and exact duplicates merged into weighted means.
inline std::vector<CumulativePoint> build_cumulative_set(
    const CalibrationDataset& ds) {
  const std::size_t m = ds.samples(), k = ds.classes();
  struct RawPt {
    double q;
    int rank;
    std::uint8_t y;
  };
  std::vector<RawPt> raw;
  raw.reserve(m * (k - 1));
  std::vector<int> order(k);
  for (std::size_t i = 0; i < m; ++i) {
    const double* p = ds.probs.row(i);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return p[a] > p[b]; });
    double cum = 0.0;
    bool hit = false;
    for (std::size_t r = 0; r + 1 < k; ++r) {
      cum += p[order[r]];
      hit = hit || order[r] == ds.labels[i];
      raw.push_back({cum, static_cast<int>(r + 1), static_cast<std::uint8_t>(hit)});
    }
  }
  std::stable_sort(raw.begin(), raw.end(), [](const RawPt& a, const RawPt& b) {
    if (a.q != b.q) return a.q < b.q;
    return a.rank < b.rank;
  });
  // merge q-duplicates per rank; group anchors stay valid because q is sorted
  std::vector<CumulativePoint> pts;
  pts.reserve(raw.size());
  std::vector<std::ptrdiff_t> open(k, -1);  // rank -> open group index
  for (const RawPt& rp : raw) {
    std::ptrdiff_t g = open[static_cast<std::size_t>(rp.rank)];
    if (g >= 0 && rp.q - pts[static_cast<std::size_t>(g)].q <= kCumulativeMergeTol) {
      CumulativePoint& cp = pts[static_cast<std::size_t>(g)];
      cp.y += rp.y;  // accumulate hits; divided out below
      cp.w += 1.0;
    } else {
      open[static_cast<std::size_t>(rp.rank)] =
          static_cast<std::ptrdiff_t>(pts.size());
      pts.push_back({rp.q, rp.rank, static_cast<double>(rp.y), 1.0});
    }
  }
  for (CumulativePoint& cp : pts) cp.y /= cp.w;
  return pts;
}

namespace detail {

// Reusable DP workspace for the maximal upper set search.
struct UpperSetWorkspace {
  std::vector<double> gain;         // (n+1) x cols, row-major
  std::vector<std::uint32_t> from;  // n x cols
};

// Maximal upper set of weighted, centered targets on a grid where point t
// (given in sorted order) sits at coordinates (t, rank[t]). An upper set must
// contain every point coordinate-wise above any of its members; the returned
// set maximizes sum of w * (y - mean). Single backward sweep over a table
// with one column past the largest representable rank, so the final column
// is unconstrained and the trace starts from the true optimum.
//
// idx maps positions within this subproblem to caller storage; rank/y/w are
// indexed through it.
inline void maximal_upper_set_impl(const std::vector<std::uint32_t>& idx,
                                   const std::vector<int>& rank,
                                   const std::vector<double>& y,
                                   const std::vector<double>& w, int cols,
                                   UpperSetWorkspace& ws,
                                   std::vector<std::uint32_t>& members) {
  const std::size_t n = idx.size();
  members.clear();
  if (n == 0) return;
  double wsum = 0.0, wysum = 0.0;
  for (std::uint32_t t : idx) {
    wsum += w[t];
    wysum += w[t] * y[t];
  }
  const double mean = wysum / wsum;
  const std::size_t C = static_cast<std::size_t>(cols);
  ws.gain.assign((n + 1) * C, 0.0);
  ws.from.assign(n * C, 0);
  // columns are 1-based ranks stored at [j-1]
  for (std::size_t t = n; t-- > 0;) {
    const std::uint32_t src = idx[t];
    const int l = rank[src];
    const double v = w[src] * (y[src] - mean);
    double* row = ws.gain.data() + t * C;
    const double* below = ws.gain.data() + (t + 1) * C;
    std::uint32_t* fr = ws.from.data() + t * C;
    for (int j = 1; j <= cols; ++j) {
      if (j <= l) {
        row[j - 1] = below[j - 1] + v;
        fr[j - 1] = static_cast<std::uint32_t>(j);
      } else {
        // optional point: the better of excluding it (constraint stays j)
        // and including it (constraint tightens to its rank, which can force
        // later points in). Ties go to inclusion so the traced maximizer is
        // the largest optimal upper set.
        const double keep = below[l - 1] + v;
        if (keep >= below[j - 1]) {
          row[j - 1] = keep;
          fr[j - 1] = static_cast<std::uint32_t>(l);
        } else {
          row[j - 1] = below[j - 1];
          fr[j - 1] = static_cast<std::uint32_t>(j);
        }
      }
    }
  }
  int j = cols;
  for (std::size_t t = 0; t < n; ++t) {
    std::uint32_t f = ws.from[t * C + static_cast<std::size_t>(j - 1)];
    if (static_cast<int>(f) <= rank[idx[t]])
      members.push_back(static_cast<std::uint32_t>(t));
    j = static_cast<int>(f);
  }
}

}  // namespace detail

// Standalone entry point over a full point set; returns positions (0-based,
// in input order) of the maximal upper set. rank values must lie in
// [1, max_rank] and points must already be sorted by their first coordinate.
inline std::vector<std::uint32_t> maximal_upper_set(
    const std::vector<int>& rank, const std::vector<double>& y,
    const std::vector<double>& w, int max_rank) {
  const std::size_t n = rank.size();
  if (n == 0 || y.size() != n || w.size() != n)
    throw CalibError(ErrorKind::ShapeMismatch, "upper set arrays disagree in length");
  for (int r : rank)
    if (r < 1 || r > max_rank)
      throw CalibError(ErrorKind::ShapeMismatch,
                       "rank " + std::to_string(r) + " outside [1, " +
                           std::to_string(max_rank) + "]");
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  detail::UpperSetWorkspace ws;
  std::vector<std::uint32_t> members;
  detail::maximal_upper_set_impl(idx, rank, y, w, max_rank + 1, ws, members);
  return members;
}

// Weighted least-squares fit that is non-decreasing along the coordinate-wise
// partial order of (position, rank). Recursive partitioning: each subproblem
// either takes its weighted mean (when the maximal upper set is trivial or
// carries no positive gain) or splits into the upper set and its complement,
// which are then solved independently. Implemented with an explicit stack;
// the subsets on the stack stay disjoint so memory is linear.
inline std::vector<double> fit_bivariate_isotonic(const std::vector<int>& rank,
                                                  const std::vector<double>& y,
                                                  const std::vector<double>& w,
                                                  int max_rank) {
  const std::size_t n = rank.size();
  if (n == 0 || y.size() != n || w.size() != n)
    throw CalibError(ErrorKind::ShapeMismatch, "isotonic grid arrays disagree in length");
  std::vector<double> fits(n, 0.0);
  detail::UpperSetWorkspace ws;
  std::vector<std::uint32_t> members;
  std::vector<std::vector<std::uint32_t>> stack;
  {
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);
    stack.push_back(std::move(all));
  }
  std::size_t guard = 0;
  const std::size_t guard_limit = 4 * n + 16;
  while (!stack.empty()) {
    if (++guard > guard_limit)
      throw CalibError(ErrorKind::RecursionDepthExceeded,
                       "partitioning exceeded " + std::to_string(guard_limit) +
                           " subproblems");
    std::vector<std::uint32_t> idx = std::move(stack.back());
    stack.pop_back();
    double wsum = 0.0, wysum = 0.0;
    for (std::uint32_t t : idx) {
      wsum += w[t];
      wysum += w[t] * y[t];
    }
    const double mean = wysum / wsum;
    detail::maximal_upper_set_impl(idx, rank, y, w, max_rank + 1, ws, members);
    double gain = 0.0;
    for (std::uint32_t t : members) gain += w[idx[t]] * (y[idx[t]] - mean);
    if (members.empty() || members.size() == idx.size() || gain <= 0.0) {
      for (std::uint32_t t : idx) fits[t] = mean;
      continue;
    }
    std::vector<std::uint32_t> upper, lower;
    upper.reserve(members.size());
    lower.reserve(idx.size() - members.size());
    std::size_t mi = 0;
    for (std::size_t t = 0; t < idx.size(); ++t) {
      if (mi < members.size() && members[mi] == t) {
        upper.push_back(idx[t]);
        ++mi;
      } else {
        lower.push_back(idx[t]);
      }
    }
    stack.push_back(std::move(lower));
    stack.push_back(std::move(upper));
  }
  return fits;
}

// Cumulative query table: cell (i, r) holds the largest fitted value among
// training points dominated by (q_i, r), i.e. points with position <= i and
// rank <= r. Row 0 covers queries dominating nothing and holds the minimum
// fit everywhere.
struct PredictionGrid {
  std::vector<double> q;      // sorted first coordinates, one per point
  std::vector<double> table;  // (n+1) x (k-1), row-major
  std::size_t ranks = 0;

  double query(double p, int rank) const {
    std::size_t lo = 0, hi = q.size();
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (q[mid] <= p)
        lo = mid + 1;
      else
        hi = mid;
    }
    return table[lo * ranks + static_cast<std::size_t>(rank - 1)];
  }
};

inline PredictionGrid build_prediction_grid(
    const std::vector<CumulativePoint>& pts, const std::vector<double>& fits,
    std::size_t k) {
  const std::size_t n = pts.size();
  const std::size_t R = k - 1;
  PredictionGrid grid;
  grid.ranks = R;
  grid.q.resize(n);
  grid.table.assign((n + 1) * R, 0.0);
  double min_fit = fits.empty() ? 0.0 : *std::min_element(fits.begin(), fits.end());
  for (std::size_t j = 0; j < R; ++j) grid.table[j] = min_fit;
  for (std::size_t i = 0; i < n; ++i) {
    grid.q[i] = pts[i].q;
    const double* prev = grid.table.data() + i * R;
    double* row = grid.table.data() + (i + 1) * R;
    const std::size_t l = static_cast<std::size_t>(pts[i].rank);
    for (std::size_t j = 1; j <= R; ++j) {
      double v = prev[j - 1];
      if (j >= l && fits[i] > v) v = fits[i];
      row[j - 1] = v;
    }
  }
  return grid;
}

struct SCIRModel {
  std::vector<CumulativePoint> points;
  std::vector<double> fits;
  PredictionGrid grid;
  std::size_t k = 0;
  double epsilon = 1e-6;

  double grid_query(double p, int rank) const { return grid.query(p, rank); }
};

inline SCIRModel fit_scir(const CalibrationDataset& ds, double epsilon = 1e-6) {
  SCIRModel model;
  model.k = ds.classes();
  model.epsilon = epsilon;
  model.points = build_cumulative_set(ds);
  std::vector<int> rank(model.points.size());
  std::vector<double> y(model.points.size()), w(model.points.size());
  for (std::size_t i = 0; i < model.points.size(); ++i) {
    rank[i] = model.points[i].rank;
    y[i] = model.points[i].y;
    w[i] = model.points[i].w;
  }
  model.fits =
      fit_bivariate_isotonic(rank, y, w, static_cast<int>(model.k) - 1);
  model.grid = build_prediction_grid(model.points, model.fits, model.k);
  return model;
}

// Calibrated cumulative curve per row: evaluate the grid at each top-r sum,
// force monotonicity and [0,1], difference to recover per-class mass, undo
// the row's sort permutation, then mix in epsilon and renormalize so every
// class keeps strictly positive probability.
inline ProbMatrix predict_scir(const SCIRModel& model, const ProbMatrix& probs) {
  const std::size_t k = model.k;
  if (probs.cols != k)
    throw CalibError(ErrorKind::ShapeMismatch,
                     "model expects k=" + std::to_string(k) + ", input has " +
                         std::to_string(probs.cols));
  ProbMatrix out(probs.rows, probs.cols);
  parallel_rows(probs.rows, [&](std::size_t i) {
    const double* p = probs.row(i);
    double* o = out.row(i);
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return p[a] > p[b]; });
    double cum = 0.0;
    double prev = 0.0;
    for (std::size_t r = 1; r < k; ++r) {
      cum += p[order[r - 1]];
      double v = model.grid.query(cum, static_cast<int>(r));
      v = std::min(1.0, std::max(0.0, v));
      if (v < prev) v = prev;
      o[order[r - 1]] = v - prev;
      prev = v;
    }
    o[order[k - 1]] = 1.0 - prev;
    for (std::size_t l = 0; l < k; ++l) o[l] += model.epsilon;
    detail::normalize_row_or_uniform(o, k);
  });
  return out;
}

}  // namespace calikit
