#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "calikit/core.hpp"

namespace calikit {

struct TSModel {
  double T = 1.0;
  std::size_t k = 0;
};

struct VSOptions {
  double lr = 0.01;
  int iters = 2000;
};

struct VSModel {
  std::vector<double> scale;
  std::vector<double> bias;
  std::size_t k = 0;
};

// Mean negative log-likelihood of softmax(z / T).
inline double ts_nll(const LogitMatrix& z, const LabelVector& labels, double T) {
  if (!(T > 0.0))
    throw CalibError(ErrorKind::NonPositiveT, "temperature " + std::to_string(T));
  if (labels.size() != z.rows)
    throw CalibError(ErrorKind::ShapeMismatch, "label count differs from logit rows");
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows; ++i) {
    const double* zi = z.row(i);
    double mx = zi[0];
    for (std::size_t j = 1; j < z.cols; ++j) mx = std::max(mx, zi[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) lse += std::exp((zi[j] - mx) / T);
    total += std::log(lse) - (zi[static_cast<std::size_t>(labels[i])] - mx) / T;
  }
  return total / static_cast<double>(z.rows);
}

inline constexpr double kTemperatureLo = 0.05;
inline constexpr double kTemperatureHi = 20.0;

namespace detail {

inline const LogitMatrix& dataset_logits(const CalibrationDataset& ds,
                                         LogitMatrix& storage) {
  if (ds.logits) return *ds.logits;
  storage = logits_from_probs(ds.probs);
  return storage;
}

}  // namespace detail

// Golden-section search for the temperature minimizing ts_nll over
// [0.05, 20], run to an absolute width of 1e-4. Deterministic; uses the
// dataset's logits, or log-probabilities when logits were not provided.
inline TSModel fit_temperature(const CalibrationDataset& ds) {
  LogitMatrix storage;
  const LogitMatrix& z = detail::dataset_logits(ds, storage);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = kTemperatureLo, b = kTemperatureHi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = ts_nll(z, ds.labels, c);
  double fd = ts_nll(z, ds.labels, d);
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = ts_nll(z, ds.labels, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = ts_nll(z, ds.labels, d);
    }
  }
  TSModel model;
  model.T = 0.5 * (a + b);
  model.k = ds.classes();
  return model;
}

namespace detail {

// NLL and its gradient for softmax(scale * z + bias) in one pass.
inline double vs_nll_grad(const LogitMatrix& z, const LabelVector& labels,
                          const std::vector<double>& scale,
                          const std::vector<double>& bias,
                          std::vector<double>* gscale,
                          std::vector<double>* gbias) {
  const std::size_t m = z.rows, k = z.cols;
  if (gscale) {
    gscale->assign(k, 0.0);
    gbias->assign(k, 0.0);
  }
  std::vector<double> t(k);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* zi = z.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      t[j] = scale[j] * zi[j] + bias[j];
      mx = std::max(mx, t[j]);
    }
    double lse = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      t[j] = std::exp(t[j] - mx);
      lse += t[j];
    }
    total += std::log(lse) - (scale[static_cast<std::size_t>(labels[i])] *
                                  zi[static_cast<std::size_t>(labels[i])] +
                              bias[static_cast<std::size_t>(labels[i])] - mx);
    if (gscale) {
      for (std::size_t j = 0; j < k; ++j) {
        double resid = t[j] / lse -
                       (labels[i] == static_cast<int>(j) ? 1.0 : 0.0);
        (*gscale)[j] += resid * zi[j];
        (*gbias)[j] += resid;
      }
    }
  }
  if (gscale)
    for (std::size_t j = 0; j < k; ++j) {
      (*gscale)[j] /= static_cast<double>(m);
      (*gbias)[j] /= static_cast<double>(m);
    }
  return total / static_cast<double>(m);
}

}  // namespace detail

// Full-batch gradient descent from (scale=1, bias=0) with halving on any
// step that fails to decrease the objective; the final NLL can therefore
// never exceed the initial one. m >= k is advisable for the k free
// directions per parameter vector.
inline VSModel fit_vector_scaling(const CalibrationDataset& ds,
                                  const VSOptions& opts = {}) {
  LogitMatrix storage;
  const LogitMatrix& z = detail::dataset_logits(ds, storage);
  const std::size_t k = ds.classes();
  if (ds.samples() < k)
    std::fprintf(stderr,
                 "calikit: vector scaling with m=%zu < k=%zu is underdetermined\n",
                 ds.samples(), k);
  std::vector<double> scale(k, 1.0), bias(k, 0.0), gs, gb;
  double lr = opts.lr;
  double cur = detail::vs_nll_grad(z, ds.labels, scale, bias, &gs, &gb);
  std::vector<double> s2(k), b2(k);
  for (int it = 0; it < opts.iters; ++it) {
    bool accepted = false;
    while (lr > 1e-12) {
      for (std::size_t j = 0; j < k; ++j) {
        s2[j] = scale[j] - lr * gs[j];
        b2[j] = bias[j] - lr * gb[j];
      }
      double cand = detail::vs_nll_grad(z, ds.labels, s2, b2, nullptr, nullptr);
      if (cand < cur) {
        scale.swap(s2);
        bias.swap(b2);
        cur = cand;
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) break;
    cur = detail::vs_nll_grad(z, ds.labels, scale, bias, &gs, &gb);
  }
  VSModel model;
  model.scale = std::move(scale);
  model.bias = std::move(bias);
  model.k = k;
  return model;
}

inline ProbMatrix predict_scaled(const TSModel& model, const LogitMatrix& z) {
  if (z.cols != model.k)
    throw CalibError(ErrorKind::ShapeMismatch,
                     "model expects k=" + std::to_string(model.k) +
                         ", input has " + std::to_string(z.cols));
  if (!(model.T > 0.0))
    throw CalibError(ErrorKind::NonPositiveT, "temperature " + std::to_string(model.T));
  LogitMatrix scaled(z.rows, z.cols);
  for (std::size_t i = 0; i < z.rows; ++i)
    for (std::size_t j = 0; j < z.cols; ++j) scaled(i, j) = z(i, j) / model.T;
  return probs_from_logits(scaled);
}

inline ProbMatrix predict_scaled(const VSModel& model, const LogitMatrix& z) {
  if (z.cols != model.k)
    throw CalibError(ErrorKind::ShapeMismatch,
                     "model expects k=" + std::to_string(model.k) +
                         ", input has " + std::to_string(z.cols));
  LogitMatrix t(z.rows, z.cols);
  for (std::size_t i = 0; i < z.rows; ++i)
    for (std::size_t j = 0; j < z.cols; ++j)
      t(i, j) = model.scale[j] * z(i, j) + model.bias[j];
  return probs_from_logits(t);
}

}  // namespace calikit
