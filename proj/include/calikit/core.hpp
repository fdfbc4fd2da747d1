#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "calikit/errors.hpp"

namespace calikit {

// Probabilities below this are clamped wherever a logarithm is taken.
inline constexpr double kProbClamp = 1e-12;

// Row sums this small cannot be renormalized.
inline constexpr double kRowSumFloor = 1e-12;

// Entries above -1e-9 are treated as float round-off and clamped to zero.
inline constexpr double kNegativeTolerance = -1e-9;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return v[i * cols + j];
  }
  double* row(std::size_t i) { return v.data() + i * cols; }
  const double* row(std::size_t i) const { return v.data() + i * cols; }
};

// Row-stochastic class probabilities, one row per sample.
struct ProbMatrix : Matrix {
  using Matrix::Matrix;
};

// Unconstrained pre-softmax scores with the same layout as ProbMatrix.
struct LogitMatrix : Matrix {
  using Matrix::Matrix;
};

using LabelVector = std::vector<int>;

namespace detail {

inline void require_shape(const Matrix& m) {
  if (m.rows == 0 || m.cols < 2)
    throw CalibError(ErrorKind::ShapeMismatch,
                     "need at least 1 row and 2 classes, got " +
                         std::to_string(m.rows) + "x" + std::to_string(m.cols));
  if (m.v.size() != m.rows * m.cols)
    throw CalibError(ErrorKind::ShapeMismatch, "matrix storage size mismatch");
}

}  // namespace detail

// Checks finiteness and nonnegativity, then renormalizes each row to sum to
// one. Rows already within a few ulps of stochastic are left untouched so the
// operation is idempotent bit-for-bit. Tiny negative round-off is clamped to
// zero; anything more negative is rejected.
inline ProbMatrix validate_probs(const Matrix& raw) {
  detail::require_shape(raw);
  ProbMatrix out;
  static_cast<Matrix&>(out) = raw;
  const double k = static_cast<double>(out.cols);
  for (std::size_t i = 0; i < out.rows; ++i) {
    double* r = out.row(i);
    double sum = 0.0;
    for (std::size_t j = 0; j < out.cols; ++j) {
      double p = r[j];
      if (!std::isfinite(p))
        throw CalibError(ErrorKind::NonFiniteEntry,
                         "probability at row " + std::to_string(i) + ", class " +
                             std::to_string(j),
                         i);
      if (p < kNegativeTolerance)
        throw CalibError(ErrorKind::NegativeProbability,
                         "probability " + std::to_string(p) + " at row " +
                             std::to_string(i) + ", class " + std::to_string(j),
                         i);
      if (p < 0.0) {
        p = 0.0;
        r[j] = 0.0;
      }
      sum += p;
    }
    if (sum <= kRowSumFloor)
      throw CalibError(ErrorKind::RowSumZero,
                       "row " + std::to_string(i) + " sums to " +
                           std::to_string(sum),
                       i);
    if (std::fabs(sum - 1.0) > 16.0 * 2.220446049250313e-16 * k) {
      for (std::size_t j = 0; j < out.cols; ++j) r[j] /= sum;
    }
  }
  return out;
}

// Validated (probabilities, labels) pairing, optionally with the logits the
// probabilities came from.
struct CalibrationDataset {
  ProbMatrix probs;
  std::optional<LogitMatrix> logits;
  LabelVector labels;

  std::size_t samples() const { return probs.rows; }
  std::size_t classes() const { return probs.cols; }
};

inline CalibrationDataset validate_dataset(
    const Matrix& probs_raw, const LabelVector& labels,
    const std::optional<Matrix>& logits_raw = std::nullopt) {
  CalibrationDataset ds;
  ds.probs = validate_probs(probs_raw);
  if (labels.size() != ds.probs.rows)
    throw CalibError(ErrorKind::ShapeMismatch,
                     std::to_string(labels.size()) + " labels for " +
                         std::to_string(ds.probs.rows) + " rows");
  const int k = static_cast<int>(ds.probs.cols);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k)
      throw CalibError(ErrorKind::LabelOutOfRange,
                       "label " + std::to_string(labels[i]) + " at row " +
                           std::to_string(i) + " with k=" + std::to_string(k),
                       i);
  }
  ds.labels = labels;
  if (logits_raw) {
    detail::require_shape(*logits_raw);
    if (logits_raw->rows != ds.probs.rows || logits_raw->cols != ds.probs.cols)
      throw CalibError(ErrorKind::ShapeMismatch, "logits shape differs from probabilities");
    for (std::size_t i = 0; i < logits_raw->rows; ++i)
      for (std::size_t j = 0; j < logits_raw->cols; ++j)
        if (!std::isfinite((*logits_raw)(i, j)))
          throw CalibError(ErrorKind::NonFiniteEntry,
                           "logit at row " + std::to_string(i) + ", class " +
                               std::to_string(j),
                           i);
    LogitMatrix lm;
    static_cast<Matrix&>(lm) = *logits_raw;
    ds.logits = std::move(lm);
  }
  return ds;
}

// Softmax each row with max subtraction; immune to overflow for any finite
// input.
inline ProbMatrix probs_from_logits(const LogitMatrix& z) {
  detail::require_shape(z);
  ProbMatrix out(z.rows, z.cols);
  for (std::size_t i = 0; i < z.rows; ++i) {
    const double* zi = z.row(i);
    double* pi = out.row(i);
    double mx = zi[0];
    for (std::size_t j = 0; j < z.cols; ++j) {
      if (!std::isfinite(zi[j]))
        throw CalibError(ErrorKind::NonFiniteEntry,
                         "logit at row " + std::to_string(i), i);
      if (zi[j] > mx) mx = zi[j];
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) {
      pi[j] = std::exp(zi[j] - mx);
      sum += pi[j];
    }
    for (std::size_t j = 0; j < z.cols; ++j) pi[j] /= sum;
  }
  return out;
}

// Elementwise log with clamping; inverts probs_from_logits up to the shared
// constant each row is free to absorb.
inline LogitMatrix logits_from_probs(const ProbMatrix& p,
                                     double clamp = kProbClamp) {
  detail::require_shape(p);
  LogitMatrix out(p.rows, p.cols);
  for (std::size_t i = 0; i < p.rows; ++i)
    for (std::size_t j = 0; j < p.cols; ++j)
      out(i, j) = std::log(p(i, j) < clamp ? clamp : p(i, j));
  return out;
}

namespace detail {

// Shared row renormalization for calibrator outputs: rows whose mass
// disappeared entirely fall back to uniform.
inline void normalize_row_or_uniform(double* r, std::size_t k) {
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) sum += r[j];
  if (sum <= kRowSumFloor) {
    double u = 1.0 / static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j) r[j] = u;
    return;
  }
  for (std::size_t j = 0; j < k; ++j) r[j] /= sum;
}

}  // namespace detail

}  // namespace calikit
