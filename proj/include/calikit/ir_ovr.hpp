#pragma once

#include <vector>

#include "calikit/core.hpp"
#include "calikit/flat_iso.hpp"
#include "calikit/pava.hpp"

namespace calikit {

// One-vs-rest isotonic baseline: an independent isotonic map per class over
// that class's own probability column, renormalized row-wise at prediction
// time. Unlike the shared-map calibrators this is not permutation
// equivariant.
struct IROvRModel {
  std::vector<StepFunction> per_class;
  std::size_t k = 0;
};

inline IROvRModel fit_ir_ovr(const CalibrationDataset& ds) {
  const std::size_t m = ds.samples(), k = ds.classes();
  IROvRModel model;
  model.k = k;
  model.per_class.reserve(k);
  IsotonicInstance inst;
  inst.x.resize(m);
  inst.y.resize(m);
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t i = 0; i < m; ++i) {
      inst.x[i] = ds.probs(i, l);
      inst.y[i] = ds.labels[i] == static_cast<int>(l) ? 1.0 : 0.0;
    }
    model.per_class.push_back(pava_fit(inst));
  }
  return model;
}

inline ProbMatrix predict_ir_ovr(const IROvRModel& model, const ProbMatrix& probs) {
  if (probs.cols != model.k)
    throw CalibError(ErrorKind::ShapeMismatch,
                     "model expects k=" + std::to_string(model.k) +
                         ", input has " + std::to_string(probs.cols));
  ProbMatrix out(probs.rows, probs.cols);
  parallel_rows(probs.rows, [&](std::size_t i) {
    const double* pi = probs.row(i);
    double* oi = out.row(i);
    for (std::size_t l = 0; l < model.k; ++l)
      oi[l] = model.per_class[l].eval(pi[l]);
    detail::normalize_row_or_uniform(oi, model.k);
  });
  return out;
}

}  // namespace calikit
