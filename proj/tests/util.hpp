#pragma once

#include <initializer_list>
#include <string>

#include "calikit/calikit.hpp"

namespace testutil {

inline calikit::Matrix mat(std::size_t r, std::size_t c,
                           std::initializer_list<double> vals) {
  calikit::Matrix m(r, c);
  std::size_t i = 0;
  for (double v : vals) m.v[i++] = v;
  return m;
}

inline calikit::ProbMatrix probs(std::size_t r, std::size_t c,
                                 std::initializer_list<double> vals) {
  return calikit::validate_probs(mat(r, c, vals));
}

inline calikit::CalibrationDataset dataset(
    std::size_t r, std::size_t c, std::initializer_list<double> vals,
    std::initializer_list<int> labels) {
  return calikit::validate_dataset(mat(r, c, vals),
                                   calikit::LabelVector(labels));
}

// Unique scratch path under the build directory's working dir.
inline std::string tmp_path(const std::string& name) {
  return "calikit_test_" + name;
}

}  // namespace testutil
