#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "calikit/core.hpp"
#include "calikit/metrics.hpp"

namespace calikit {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  const std::string t = trim(s);
  if (t.empty())
    throw CalibError(ErrorKind::BadCsv, "empty field at line " + std::to_string(line_no));
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() || *end != '\0')
    throw CalibError(ErrorKind::BadCsv,
                     "cannot parse '" + t + "' at line " + std::to_string(line_no));
  return v;
}

// Validates a header of the form prefix0,...,prefix{k-1}[,label].
inline std::pair<std::size_t, bool> parse_header(const std::string& line,
                                                 const std::string& prefix) {
  std::vector<std::string> cols = split_csv_line(line);
  bool has_label = false;
  std::size_t k = cols.size();
  if (!cols.empty() && trim(cols.back()) == "label") {
    has_label = true;
    k -= 1;
  }
  if (k < 2)
    throw CalibError(ErrorKind::BadCsv, "header needs at least 2 class columns");
  for (std::size_t j = 0; j < k; ++j)
    if (trim(cols[j]) != prefix + std::to_string(j))
      throw CalibError(ErrorKind::BadCsv,
                       "expected column '" + prefix + std::to_string(j) +
                           "', found '" + trim(cols[j]) + "'");
  return {k, has_label};
}

}  // namespace detail

struct PredictionsFile {
  Matrix values;
  std::optional<LabelVector> labels;
};

// Reads a probability CSV with header p0..p{k-1}[,label]. Values are parsed
// but not validated here; validate_probs / validate_dataset applies the
// ingestion rules and reports the offending row.
inline PredictionsFile read_predictions_csv(const std::string& path,
                                            const std::string& prefix = "p") {
  std::ifstream in(path);
  if (!in) throw CalibError(ErrorKind::BadCsv, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw CalibError(ErrorKind::BadCsv, path + " is empty");
  auto [k, has_label] = detail::parse_header(line, prefix);
  PredictionsFile pf;
  if (has_label) pf.labels = LabelVector{};
  std::vector<double> data;
  std::size_t rows = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != k + (has_label ? 1 : 0))
      throw CalibError(ErrorKind::BadCsv,
                       "expected " + std::to_string(k + (has_label ? 1 : 0)) +
                           " fields, found " + std::to_string(cells.size()) +
                           " at line " + std::to_string(line_no));
    for (std::size_t j = 0; j < k; ++j)
      data.push_back(detail::parse_double(cells[j], line_no));
    if (has_label) {
      double lv = detail::parse_double(cells[k], line_no);
      long li = std::lround(lv);
      if (static_cast<double>(li) != lv)
        throw CalibError(ErrorKind::BadCsv,
                         "label '" + detail::trim(cells[k]) +
                             "' is not an integer at line " + std::to_string(line_no));
      pf.labels->push_back(static_cast<int>(li));
    }
    ++rows;
  }
  if (rows == 0) throw CalibError(ErrorKind::BadCsv, path + " has no data rows");
  pf.values.rows = rows;
  pf.values.cols = k;
  pf.values.v = std::move(data);
  return pf;
}

inline Matrix read_logits_csv(const std::string& path) {
  PredictionsFile pf = read_predictions_csv(path, "z");
  if (pf.labels)
    throw CalibError(ErrorKind::BadCsv, "logits file must not carry a label column");
  return pf.values;
}

namespace detail {

// 17 significant digits round-trip IEEE doubles exactly.
inline void write_double(std::FILE* f, double v) { std::fprintf(f, "%.17g", v); }

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

inline std::unique_ptr<std::FILE, FileCloser> open_for_write(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw CalibError(ErrorKind::BadCsv, "cannot open " + path + " for writing");
  return std::unique_ptr<std::FILE, FileCloser>(f);
}

}  // namespace detail

inline void write_matrix_csv(const std::string& path, const Matrix& m,
                             const std::string& prefix,
                             const LabelVector* labels = nullptr) {
  auto f = detail::open_for_write(path);
  for (std::size_t j = 0; j < m.cols; ++j)
    std::fprintf(f.get(), "%s%s%zu", j ? "," : "", prefix.c_str(), j);
  if (labels) std::fprintf(f.get(), ",label");
  std::fprintf(f.get(), "\n");
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (j) std::fputc(',', f.get());
      detail::write_double(f.get(), m(i, j));
    }
    if (labels) std::fprintf(f.get(), ",%d", (*labels)[i]);
    std::fputc('\n', f.get());
  }
}

inline void write_predictions_csv(const std::string& path, const ProbMatrix& p) {
  write_matrix_csv(path, p, "p");
}

inline void write_dataset_csv(const std::string& path, const ProbMatrix& p,
                              const LabelVector& labels) {
  write_matrix_csv(path, p, "p", &labels);
}

inline void write_logits_csv(const std::string& path, const LogitMatrix& z) {
  write_matrix_csv(path, z, "z");
}

inline void write_reliability_csv(const std::string& path,
                                  const ReliabilityTable& table) {
  auto f = detail::open_for_write(path);
  std::fprintf(f.get(), "lower,upper,mean_confidence,accuracy,count\n");
  for (const ReliabilityBin& b : table.bins) {
    detail::write_double(f.get(), b.lower);
    std::fputc(',', f.get());
    detail::write_double(f.get(), b.upper);
    std::fputc(',', f.get());
    if (b.mean_confidence) detail::write_double(f.get(), *b.mean_confidence);
    std::fputc(',', f.get());
    if (b.accuracy) detail::write_double(f.get(), *b.accuracy);
    std::fprintf(f.get(), ",%zu\n", b.count);
  }
}

}  // namespace calikit
