#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "calikit/core.hpp"
#include "calikit/rng.hpp"

namespace calikit {

// Calibrated-by-construction generator: per sample a Dirichlet(alpha) vector
// q is drawn (k gamma variates, normalized), the label comes from
// Categorical(q), and the reported scores are softmax(ln q / distortion_T).
// distortion_T = 1 reports q itself; smaller values sharpen (overconfident),
// larger values flatten (underconfident). The gamma and label draws do not
// depend on distortion_T, so datasets that differ only in it share q and
// labels for the same seed.
struct SynthConfig {
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<double> alpha;  // empty means all ones
  double distortion_T = 1.0;
  std::uint64_t seed = 0;
};

inline CalibrationDataset gen_calibrated(const SynthConfig& cfg) {
  if (cfg.m == 0 || cfg.k < 2)
    throw CalibError(ErrorKind::ShapeMismatch,
                     "generator needs m >= 1 and k >= 2, got m=" +
                         std::to_string(cfg.m) + ", k=" + std::to_string(cfg.k));
  if (!(cfg.distortion_T > 0.0))
    throw CalibError(ErrorKind::NonPositiveT,
                     "distortion temperature " + std::to_string(cfg.distortion_T));
  std::vector<double> alpha = cfg.alpha;
  if (alpha.empty()) alpha.assign(cfg.k, 1.0);
  if (alpha.size() != cfg.k)
    throw CalibError(ErrorKind::ShapeMismatch,
                     std::to_string(alpha.size()) + " alphas for k=" +
                         std::to_string(cfg.k));
  for (double a : alpha)
    if (!(a > 0.0))
      throw CalibError(ErrorKind::ShapeMismatch,
                       "Dirichlet parameters must be positive");
  Rng rng(cfg.seed);
  Matrix logits(cfg.m, cfg.k);
  LabelVector labels(cfg.m);
  std::vector<double> q(cfg.k);
  for (std::size_t i = 0; i < cfg.m; ++i) {
    double sum = 0.0;
    for (std::size_t l = 0; l < cfg.k; ++l) {
      q[l] = rng.gamma(alpha[l]);
      sum += q[l];
    }
    for (std::size_t l = 0; l < cfg.k; ++l) q[l] /= sum;
    labels[i] = rng.categorical(q.data(), static_cast<int>(cfg.k));
    for (std::size_t l = 0; l < cfg.k; ++l) {
      double ql = q[l] < kProbClamp ? kProbClamp : q[l];
      logits(i, l) = std::log(ql) / cfg.distortion_T;
    }
  }
  LogitMatrix z;
  static_cast<Matrix&>(z) = logits;
  ProbMatrix probs = probs_from_logits(z);
  CalibrationDataset ds;
  ds.probs = std::move(probs);
  ds.logits = std::move(z);
  ds.labels = std::move(labels);
  return ds;
}

// Reparameterizes given probabilities through a temperature: softmax of
// ln(p)/T row-wise. T = 1 reproduces the input (up to renormalization of the
// clamp); argmax is preserved for every T since the map is monotone per row.
inline ProbMatrix distort_temperature(const ProbMatrix& probs, double T) {
  if (!(T > 0.0))
    throw CalibError(ErrorKind::NonPositiveT, "distortion temperature " + std::to_string(T));
  LogitMatrix z = logits_from_probs(probs);
  for (double& v : z.v) v /= T;
  return probs_from_logits(z);
}

}  // namespace calikit
