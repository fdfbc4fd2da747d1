#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "calikit/core.hpp"
#include "calikit/pava.hpp"
#include "calikit/parallel.hpp"
#include "calikit/rng.hpp"

namespace calikit {

// Every (sample, class) entry of the dataset as a scalar regression point:
// x is the predicted probability, y says whether that class was the label.
struct FlattenedSet {
  std::vector<double> x;
  std::vector<std::uint8_t> y;
  std::vector<std::uint32_t> sample;
  std::vector<std::uint32_t> cls;
};

inline FlattenedSet flatten(const CalibrationDataset& ds) {
  const std::size_t m = ds.samples(), k = ds.classes();
  FlattenedSet fs;
  fs.x.reserve(m * k);
  fs.y.reserve(m * k);
  fs.sample.reserve(m * k);
  fs.cls.reserve(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = ds.probs.row(i);
    for (std::size_t l = 0; l < k; ++l) {
      fs.x.push_back(row[l]);
      fs.y.push_back(static_cast<std::uint8_t>(ds.labels[i] == static_cast<int>(l)));
      fs.sample.push_back(static_cast<std::uint32_t>(i));
      fs.cls.push_back(static_cast<std::uint32_t>(l));
    }
  }
  return fs;
}

// --- FIR: one isotonic map shared by all classes, renormalized row-wise ---

struct FIRModel {
  StepFunction fn;
  std::size_t k = 0;
};

inline FIRModel fit_fir(const CalibrationDataset& ds) {
  FlattenedSet fs = flatten(ds);
  IsotonicInstance inst;
  inst.x = std::move(fs.x);
  inst.y.assign(fs.y.begin(), fs.y.end());
  FIRModel model;
  model.fn = pava_fit(inst);
  model.k = ds.classes();
  return model;
}

namespace detail {

template <typename EvalFn>
ProbMatrix eval_rows_normalized(const ProbMatrix& probs, std::size_t k, EvalFn&& ev) {
  if (probs.cols != k)
    throw CalibError(ErrorKind::ShapeMismatch,
                     "model expects k=" + std::to_string(k) + ", input has " +
                         std::to_string(probs.cols));
  ProbMatrix out(probs.rows, probs.cols);
  parallel_rows(probs.rows, [&](std::size_t i) {
    const double* pi = probs.row(i);
    double* oi = out.row(i);
    for (std::size_t l = 0; l < k; ++l) oi[l] = ev(pi[l]);
    normalize_row_or_uniform(oi, k);
  });
  return out;
}

}  // namespace detail

inline ProbMatrix predict_fir(const FIRModel& model, const ProbMatrix& probs) {
  return detail::eval_rows_normalized(
      probs, model.k, [&](double p) { return model.fn.eval(p); });
}

// --- NA-FIR: same block structure, fits tuned against the normalized
// log-likelihood by a Metropolis random walk over single blocks ---

// Isotonic block partition over the distinct flattened probabilities.
// starts has a trailing sentinel; block b covers pooled points
// [starts[b], starts[b+1]). multiplicity counts flattened entries per pooled
// point, so block populations are entry counts, not distinct values.
struct BlockStructure {
  std::vector<double> xs;
  std::vector<std::uint32_t> multiplicity;
  std::vector<std::size_t> starts;
  std::vector<double> fits;

  std::size_t num_blocks() const { return fits.size(); }
  std::size_t block_population(std::size_t b) const {
    std::size_t n = 0;
    for (std::size_t p = starts[b]; p < starts[b + 1]; ++p) n += multiplicity[p];
    return n;
  }
  StepFunction to_step_function() const {
    StepFunction f;
    f.blocks.resize(num_blocks());
    for (std::size_t b = 0; b < num_blocks(); ++b) {
      StepBlock& blk = f.blocks[b];
      blk.lower = xs[starts[b]];
      blk.upper = xs[starts[b + 1] - 1];
      blk.fit = fits[b];
      blk.count = starts[b + 1] - starts[b];
      blk.weight = static_cast<double>(block_population(b));
    }
    f.domain_floor = f.blocks.empty() ? 0.0 : f.blocks.front().fit;
    return f;
  }
};

// Refines the partition until at least min_blocks blocks exist, splitting the
// most populous block into equal-population sub-blocks of at least
// split_size_threshold entries each (larger remainders land in the leading
// sub-blocks). Sub-blocks inherit the parent fit, so the induced function and
// the objective are unchanged. min_blocks == 0 disables splitting.
inline BlockStructure split_blocks(const BlockStructure& in,
                                   std::size_t min_blocks,
                                   std::size_t split_size_threshold) {
  BlockStructure bs = in;
  if (min_blocks == 0 || bs.num_blocks() >= min_blocks) return bs;
  const std::size_t thr = split_size_threshold == 0 ? 1 : split_size_threshold;
  while (bs.num_blocks() < min_blocks) {
    // most populous block, earliest on ties
    std::size_t target = bs.num_blocks();
    std::size_t target_pop = 0;
    for (std::size_t b = 0; b < bs.num_blocks(); ++b) {
      std::size_t pop = bs.block_population(b);
      std::size_t points = bs.starts[b + 1] - bs.starts[b];
      std::size_t q_max = std::min(pop / thr, points);
      if (q_max >= 2 && pop > target_pop) {
        target = b;
        target_pop = pop;
      }
    }
    if (target == bs.num_blocks())
      throw CalibError(ErrorKind::ThresholdLargerThanBlock,
                       "no block can be split into sub-blocks of at least " +
                           std::to_string(thr) + " entries while " +
                           std::to_string(min_blocks) + " blocks are required");
    std::size_t points = bs.starts[target + 1] - bs.starts[target];
    std::size_t q_max = std::min(target_pop / thr, points);
    std::size_t need = min_blocks - bs.num_blocks() + 1;
    std::size_t q = std::min(q_max, need);
    // planned sub-block populations, equal up to the remainder
    std::size_t base = target_pop / q, rem = target_pop % q;
    std::vector<std::size_t> new_starts;
    std::size_t p = bs.starts[target];
    const std::size_t pend = bs.starts[target + 1];
    for (std::size_t t = 0; t < q; ++t) {
      new_starts.push_back(p);
      std::size_t want = base + (t < rem ? 1 : 0);
      std::size_t got = 0;
      while (p < pend && (got < want || t + 1 == q)) {
        // leave at least one pooled point per remaining sub-block
        if (t + 1 < q && pend - p <= q - t - 1) break;
        got += bs.multiplicity[p];
        ++p;
        if (t + 1 < q && got >= want) break;
      }
    }
    std::vector<std::size_t> starts2;
    std::vector<double> fits2;
    starts2.reserve(bs.starts.size() + q);
    fits2.reserve(bs.fits.size() + q);
    for (std::size_t b = 0; b < bs.num_blocks(); ++b) {
      if (b == target) {
        for (std::size_t s : new_starts) {
          starts2.push_back(s);
          fits2.push_back(bs.fits[target]);
        }
      } else {
        starts2.push_back(bs.starts[b]);
        fits2.push_back(bs.fits[b]);
      }
    }
    starts2.push_back(bs.starts.back());
    if (fits2.size() <= bs.fits.size())
      throw CalibError(ErrorKind::ThresholdLargerThanBlock,
                       "block splitting made no progress toward " +
                           std::to_string(min_blocks) + " blocks");
    bs.starts = std::move(starts2);
    bs.fits = std::move(fits2);
  }
  return bs;
}

// Per-block aggregates that make the normalized log-likelihood cheap to
// track: positives[j] counts label hits in block j, columns[j] holds the
// (sample, entries-in-block) pairs, and row_totals[i] is the current sum of
// block fits over sample i's entries.
struct SufficientStats {
  std::vector<double> positives;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> columns;
  std::vector<double> row_totals;
  std::size_t m = 0;
  std::size_t k = 0;
};

inline SufficientStats build_sufficient_stats(const CalibrationDataset& ds,
                                              const BlockStructure& bs) {
  const std::size_t m = ds.samples(), k = ds.classes(), B = bs.num_blocks();
  SufficientStats st;
  st.m = m;
  st.k = k;
  st.positives.assign(B, 0.0);
  st.columns.resize(B);
  st.row_totals.assign(m, 0.0);
  // pooled point index -> block index
  std::vector<std::uint32_t> block_of(bs.xs.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = bs.starts[b]; p < bs.starts[b + 1]; ++p)
      block_of[p] = static_cast<std::uint32_t>(b);
  std::vector<std::uint32_t> scratch_count(B, 0);
  std::vector<std::uint32_t> touched;
  touched.reserve(k);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = ds.probs.row(i);
    touched.clear();
    for (std::size_t l = 0; l < k; ++l) {
      auto it = std::lower_bound(bs.xs.begin(), bs.xs.end(), row[l]);
      if (it == bs.xs.end() || *it != row[l])
        throw std::logic_error("flattened entry missing from block structure");
      std::uint32_t b = block_of[static_cast<std::size_t>(it - bs.xs.begin())];
      if (scratch_count[b] == 0) touched.push_back(b);
      scratch_count[b] += 1;
      if (ds.labels[i] == static_cast<int>(l)) st.positives[b] += 1.0;
    }
    std::sort(touched.begin(), touched.end());
    for (std::uint32_t b : touched) {
      st.columns[b].push_back({static_cast<std::uint32_t>(i), scratch_count[b]});
      st.row_totals[i] += scratch_count[b] * bs.fits[b];
      scratch_count[b] = 0;
    }
  }
  return st;
}

// Normalized log-likelihood of block fits g:
//   L(g) = sum_j positives[j] * ln g_j - sum_i ln(sum over row i entries of g)
// Invariant under positive rescaling of g. Recomputed from scratch here;
// the annealing loop tracks it incrementally.
inline double nafir_objective(const std::vector<double>& fits,
                              const SufficientStats& st) {
  if (fits.size() != st.positives.size())
    throw CalibError(ErrorKind::ShapeMismatch, "fit count differs from block count");
  for (double g : fits)
    if (!(g > 0.0))
      throw CalibError(ErrorKind::NonPositiveFit,
                       "block fit " + std::to_string(g) + " must be positive");
  std::vector<double> totals(st.m, 0.0);
  double L = 0.0;
  for (std::size_t j = 0; j < fits.size(); ++j) {
    L += st.positives[j] * std::log(fits[j]);
    for (const auto& [i, c] : st.columns[j]) totals[i] += c * fits[j];
  }
  for (std::size_t i = 0; i < st.m; ++i) L -= std::log(totals[i]);
  return L;
}

struct NafirOptions {
  double eps_change = 1e-3;
  double beta = 200.0;
  std::uint64_t num_iterations = 100000;
  std::uint64_t early_stop_patience = 10000;
  std::size_t min_blocks = 0;
  std::size_t split_size_threshold = 0;
};

struct NAFIRModel {
  BlockStructure blocks;  // fits hold the best values found
  std::size_t k = 0;
  NafirOptions opts;
  std::uint64_t seed = 0;
  double objective = 0.0;          // best normalized log-likelihood
  double initial_objective = 0.0;  // likelihood at the floored PAVA start
  double incremental_drift = 0.0;  // |tracked - recomputed| / max(1, |recomputed|)
  std::uint64_t iterations_run = 0;
  double fit_seconds = 0.0;
};

// Blockwise Metropolis search over isotonic fits. Starts from the PAVA
// solution (zero blocks floored to kProbClamp), proposes +/- eps_change on a
// uniformly random block, rejects order or positivity violations outright,
// always accepts improvements, accepts a worsening with probability
// exp(beta * delta), and returns the best fits ever visited. The returned
// objective therefore never falls below the initial one.
inline NAFIRModel fit_nafir(const CalibrationDataset& ds,
                            const NafirOptions& opts = {},
                            std::uint64_t seed = 0) {
  auto t0 = std::chrono::steady_clock::now();
  FlattenedSet fs = flatten(ds);
  // pool entries by exact probability value
  std::vector<std::size_t> order(fs.x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return fs.x[a] < fs.x[b]; });
  BlockStructure bs;
  std::vector<double> wy, w;
  for (std::size_t r = 0; r < order.size(); ++r) {
    std::size_t e = order[r];
    if (!bs.xs.empty() && fs.x[e] == bs.xs.back()) {
      bs.multiplicity.back() += 1;
      wy.back() += fs.y[e];
      w.back() += 1.0;
    } else {
      bs.xs.push_back(fs.x[e]);
      bs.multiplicity.push_back(1);
      wy.push_back(fs.y[e]);
      w.push_back(1.0);
    }
  }
  detail::pava_pooled(wy, w, bs.starts, bs.fits);
  for (double& g : bs.fits)
    if (g < kProbClamp) g = kProbClamp;
  bs = split_blocks(bs, opts.min_blocks, opts.split_size_threshold);

  SufficientStats st = build_sufficient_stats(ds, bs);
  const std::size_t B = bs.num_blocks();
  std::vector<double>& fits = bs.fits;
  std::vector<double>& T = st.row_totals;

  double L_cur = nafir_objective(fits, st);
  double L_best = L_cur;
  std::vector<double> best_fits = fits;
  const double L_init = L_cur;

  Rng rng(seed);
  const double eps = opts.eps_change;
  std::uint64_t since_best = 0;
  std::uint64_t it = 0;
  for (; it < opts.num_iterations; ++it) {
    if (opts.early_stop_patience > 0 && since_best >= opts.early_stop_patience) break;
    std::size_t j = static_cast<std::size_t>(rng.below(B));
    double delta = rng.coin() ? eps : -eps;
    double g_new = fits[j] + delta;
    bool ok = g_new > 0.0 && (j == 0 || g_new >= fits[j - 1]) &&
              (j + 1 == B || g_new <= fits[j + 1]);
    if (!ok) {
      ++since_best;
      continue;
    }
    double dL = st.positives[j] * (std::log(g_new) - std::log(fits[j]));
    for (const auto& [i, c] : st.columns[j]) dL -= std::log1p(c * delta / T[i]);
    double L_prop = L_cur + dL;
    if (L_prop > L_best) {
      L_best = L_prop;
      best_fits = fits;
      best_fits[j] = g_new;
      since_best = 0;
    } else {
      ++since_best;
    }
    bool accept = L_prop > L_cur ||
                  rng.uniform01() < std::exp(opts.beta * (L_prop - L_cur));
    if (accept) {
      for (const auto& [i, c] : st.columns[j]) T[i] += c * delta;
      fits[j] = g_new;
      L_cur = L_prop;
    }
  }

  // rebuild the likelihood from scratch to bound accumulated tracking error
  double L_full = nafir_objective(fits, st);
  double drift = std::fabs(L_cur - L_full) / std::max(1.0, std::fabs(L_full));

  NAFIRModel model;
  fits = best_fits;
  model.blocks = std::move(bs);
  model.k = ds.classes();
  model.opts = opts;
  model.seed = seed;
  model.objective = L_best;
  model.initial_objective = L_init;
  model.incremental_drift = drift;
  model.iterations_run = it;
  model.fit_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return model;
}

inline ProbMatrix predict_nafir(const NAFIRModel& model, const ProbMatrix& probs) {
  StepFunction f = model.blocks.to_step_function();
  return detail::eval_rows_normalized(probs, model.k,
                                      [&](double p) { return f.eval(p); });
}

}  // namespace calikit
