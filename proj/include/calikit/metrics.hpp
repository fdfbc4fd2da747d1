#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "calikit/core.hpp"
#include "calikit/rng.hpp"

namespace calikit {

// Binning convention shared by the ECE variants: `count` bins over [0, 1],
// either equal-width (right-closed intervals, the first one closed at 0) or
// equal-mass (by sorted order, remainder spread one-per-bin from the front).
// `threshold` only matters for the thresholded variant; NaN means 1/k.
struct BinSpec {
  enum class Scheme { EqualWidth, EqualMass };
  Scheme scheme = Scheme::EqualWidth;
  int count = 15;
  double threshold = std::numeric_limits<double>::quiet_NaN();
};

// Mean negative log-likelihood of the labeled class, clamped at kProbClamp.
inline double nll(const ProbMatrix& probs, const LabelVector& labels) {
  if (labels.size() != probs.rows)
    throw CalibError(ErrorKind::ShapeMismatch, "label count differs from probability rows");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    double p = probs(i, static_cast<std::size_t>(labels[i]));
    total -= std::log(p < kProbClamp ? kProbClamp : p);
  }
  return total / static_cast<double>(probs.rows);
}

// Mean squared distance to the one-hot target, averaged over all m*k entries.
inline double brier(const ProbMatrix& probs, const LabelVector& labels) {
  if (labels.size() != probs.rows)
    throw CalibError(ErrorKind::ShapeMismatch, "label count differs from probability rows");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const double* row = probs.row(i);
    for (std::size_t l = 0; l < probs.cols; ++l) {
      double d = row[l] - (labels[i] == static_cast<int>(l) ? 1.0 : 0.0);
      total += d * d;
    }
  }
  return total / static_cast<double>(probs.rows * probs.cols);
}

namespace detail {

inline std::vector<double> width_edges(int count) {
  std::vector<double> edges(static_cast<std::size_t>(count) + 1);
  for (int b = 0; b <= count; ++b)
    edges[static_cast<std::size_t>(b)] =
        static_cast<double>(b) / static_cast<double>(count);
  return edges;
}

// First bin is [0, e1]; the rest are (e_b, e_{b+1}].
inline std::size_t width_bin(double v, const std::vector<double>& edges) {
  std::size_t b = 0;
  while (b + 2 < edges.size() && v > edges[b + 1]) ++b;
  return b;
}

// Binary ECE over (value, hit) pairs with equal-width bins.
inline double binary_width_ece(const std::vector<double>& value,
                               const std::vector<std::uint8_t>& hit,
                               int count) {
  std::vector<double> edges = width_edges(count);
  std::vector<double> conf(static_cast<std::size_t>(count), 0.0);
  std::vector<double> acc(static_cast<std::size_t>(count), 0.0);
  std::vector<std::size_t> n(static_cast<std::size_t>(count), 0);
  for (std::size_t i = 0; i < value.size(); ++i) {
    std::size_t b = width_bin(value[i], edges);
    conf[b] += value[i];
    acc[b] += hit[i];
    n[b] += 1;
  }
  double ece = 0.0;
  for (std::size_t b = 0; b < n.size(); ++b) {
    if (n[b] == 0) continue;
    double nb = static_cast<double>(n[b]);
    ece += nb / static_cast<double>(value.size()) *
           std::fabs(acc[b] / nb - conf[b] / nb);
  }
  return ece;
}

// Highest-probability class with ties resolved to the lowest index.
inline std::size_t argmax_row(const double* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t l = 1; l < k; ++l)
    if (row[l] > row[best]) best = l;
  return best;
}

}  // namespace detail

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::optional<double> mean_confidence;
  std::optional<double> accuracy;
  std::size_t count = 0;
};

struct ReliabilityTable {
  std::vector<ReliabilityBin> bins;
  std::size_t samples = 0;

  double ece() const {
    double total = 0.0;
    for (const ReliabilityBin& b : bins) {
      if (b.count == 0) continue;
      total += static_cast<double>(b.count) / static_cast<double>(samples) *
               std::fabs(*b.accuracy - *b.mean_confidence);
    }
    return total;
  }
};

// Confidence reliability diagram data: equal-width bins over the top
// predicted probability, accuracy = rate of the top class matching the label.
inline ReliabilityTable reliability_table(const ProbMatrix& probs,
                                          const LabelVector& labels,
                                          const BinSpec& spec = {}) {
  if (labels.size() != probs.rows)
    throw CalibError(ErrorKind::ShapeMismatch, "label count differs from probability rows");
  std::vector<double> edges = detail::width_edges(spec.count);
  std::vector<double> conf(static_cast<std::size_t>(spec.count), 0.0);
  std::vector<double> acc(static_cast<std::size_t>(spec.count), 0.0);
  std::vector<std::size_t> n(static_cast<std::size_t>(spec.count), 0);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const double* row = probs.row(i);
    std::size_t top = detail::argmax_row(row, probs.cols);
    std::size_t b = detail::width_bin(row[top], edges);
    conf[b] += row[top];
    acc[b] += top == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0;
    n[b] += 1;
  }
  ReliabilityTable table;
  table.samples = probs.rows;
  table.bins.resize(static_cast<std::size_t>(spec.count));
  for (std::size_t b = 0; b < table.bins.size(); ++b) {
    ReliabilityBin& rb = table.bins[b];
    rb.lower = edges[b];
    rb.upper = edges[b + 1];
    rb.count = n[b];
    if (n[b] > 0) {
      rb.mean_confidence = conf[b] / static_cast<double>(n[b]);
      rb.accuracy = acc[b] / static_cast<double>(n[b]);
    }
  }
  return table;
}

// Expected calibration error of the confidence (top-probability) prediction.
inline double conf_ece(const ProbMatrix& probs, const LabelVector& labels,
                       const BinSpec& spec = {}) {
  return reliability_table(probs, labels, spec).ece();
}

// Classwise ECE: mean over classes of the binary ECE of that class's
// probability column against its one-vs-rest indicator.
inline double cw_ece(const ProbMatrix& probs, const LabelVector& labels,
                     const BinSpec& spec = {}) {
  if (labels.size() != probs.rows)
    throw CalibError(ErrorKind::ShapeMismatch, "label count differs from probability rows");
  std::vector<double> value(probs.rows);
  std::vector<std::uint8_t> hit(probs.rows);
  double total = 0.0;
  for (std::size_t l = 0; l < probs.cols; ++l) {
    for (std::size_t i = 0; i < probs.rows; ++i) {
      value[i] = probs(i, l);
      hit[i] = labels[i] == static_cast<int>(l) ? 1 : 0;
    }
    total += detail::binary_width_ece(value, hit, spec.count);
  }
  return total / static_cast<double>(probs.cols);
}

// Thresholded classwise ECE: per class, entries at or below the threshold
// (1/k unless overridden) are discarded and the survivors are split into
// equal-mass bins by sorted value. Classes with no survivors are skipped;
// if every class is empty the metric is 0 by convention.
inline double tece(const ProbMatrix& probs, const LabelVector& labels,
                   const BinSpec& spec = {}) {
  if (labels.size() != probs.rows)
    throw CalibError(ErrorKind::ShapeMismatch, "label count differs from probability rows");
  const double thr = std::isnan(spec.threshold)
                         ? 1.0 / static_cast<double>(probs.cols)
                         : spec.threshold;
  double total = 0.0;
  std::size_t classes_used = 0;
  std::vector<std::pair<double, std::uint8_t>> surv;
  for (std::size_t l = 0; l < probs.cols; ++l) {
    surv.clear();
    for (std::size_t i = 0; i < probs.rows; ++i) {
      double p = probs(i, l);
      if (p > thr)
        surv.push_back({p, static_cast<std::uint8_t>(
                               labels[i] == static_cast<int>(l) ? 1 : 0)});
    }
    if (surv.empty()) continue;
    ++classes_used;
    std::sort(surv.begin(), surv.end());
    const std::size_t n = surv.size();
    const std::size_t bins = static_cast<std::size_t>(spec.count);
    std::size_t base = n / bins, rem = n % bins;
    double ece = 0.0;
    std::size_t pos = 0;
    for (std::size_t b = 0; b < bins && pos < n; ++b) {
      std::size_t size = base + (b < rem ? 1 : 0);
      if (size == 0) continue;
      double conf = 0.0, acc = 0.0;
      for (std::size_t t = 0; t < size; ++t, ++pos) {
        conf += surv[pos].first;
        acc += surv[pos].second;
      }
      double nb = static_cast<double>(size);
      ece += nb / static_cast<double>(n) * std::fabs(acc / nb - conf / nb);
    }
    total += ece;
  }
  if (classes_used == 0) {
    std::fprintf(stderr,
                 "calikit: thresholded ECE has no surviving entries in any "
                 "class; returning 0\n");
    return 0.0;
  }
  return total / static_cast<double>(classes_used);
}

using MetricFn = std::function<double(const ProbMatrix&, const LabelVector&)>;

// Consistency resampling test: labels are redrawn from the predictions
// themselves `resamples` times and the observed statistic is ranked among
// the resampled ones. Small p flags miscalibration the statistic can see.
// Each resample runs on its own derived stream, so the result does not
// depend on execution order.
inline double consistency_pvalue(const ProbMatrix& probs,
                                 const LabelVector& labels, int resamples = 1000,
                                 std::uint64_t seed = 0,
                                 const MetricFn& statistic = {}) {
  if (resamples < 1)
    throw CalibError(ErrorKind::InvalidResampleCount,
                     "resample count " + std::to_string(resamples));
  if (labels.size() != probs.rows)
    throw CalibError(ErrorKind::ShapeMismatch, "label count differs from probability rows");
  MetricFn stat = statistic;
  if (!stat)
    stat = [](const ProbMatrix& p, const LabelVector& y) {
      return conf_ece(p, y);
    };
  const double observed = stat(probs, labels);
  std::size_t at_least = 0;
  LabelVector fake(probs.rows);
  for (int b = 0; b < resamples; ++b) {
    Rng rng(splitmix64(seed + static_cast<std::uint64_t>(b)));
    for (std::size_t i = 0; i < probs.rows; ++i)
      fake[i] = rng.categorical(probs.row(i), static_cast<int>(probs.cols));
    if (stat(probs, fake) >= observed) ++at_least;
  }
  return (1.0 + static_cast<double>(at_least)) /
         (static_cast<double>(resamples) + 1.0);
}

}  // namespace calikit
