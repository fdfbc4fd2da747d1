#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace calikit {

// Every rule violation raised by the library carries one of these tags so
// callers (and the CLI) can name the rule that failed without string parsing.
enum class ErrorKind {
  NegativeProbability,
  RowSumZero,
  LabelOutOfRange,
  ShapeMismatch,
  NonFiniteEntry,
  EmptyInstance,
  ThresholdLargerThanBlock,
  NonPositiveFit,
  NonPositiveT,
  InvalidResampleCount,
  RecursionDepthExceeded,
  BadModelFile,
  BadCsv,
  UnknownMethod,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::NegativeProbability: return "NegativeProbability";
    case ErrorKind::RowSumZero: return "RowSumZero";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteEntry: return "NonFiniteEntry";
    case ErrorKind::EmptyInstance: return "EmptyInstance";
    case ErrorKind::ThresholdLargerThanBlock: return "ThresholdLargerThanBlock";
    case ErrorKind::NonPositiveFit: return "NonPositiveFit";
    case ErrorKind::NonPositiveT: return "NonPositiveT";
    case ErrorKind::InvalidResampleCount: return "InvalidResampleCount";
    case ErrorKind::RecursionDepthExceeded: return "RecursionDepthExceeded";
    case ErrorKind::BadModelFile: return "BadModelFile";
    case ErrorKind::BadCsv: return "BadCsv";
    case ErrorKind::UnknownMethod: return "UnknownMethod";
  }
  return "Unknown";
}

class CalibError : public std::runtime_error {
 public:
  CalibError(ErrorKind kind, const std::string& detail,
             std::optional<std::size_t> row = std::nullopt)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + detail),
        kind_(kind),
        row_(row) {}

  ErrorKind kind() const { return kind_; }
  // 0-based data row the violation was found in, when that is meaningful.
  std::optional<std::size_t> row() const { return row_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> row_;
};

}  // namespace calikit
