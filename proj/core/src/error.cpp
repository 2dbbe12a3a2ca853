#include "dgn/error.hpp"

namespace dgn {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroVectorRow: return "ZeroVectorRow";
    case ErrorKind::NonUnitInput: return "NonUnitInput";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DegenerateRow: return "DegenerateRow";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::EmptyLabelSet: return "EmptyLabelSet";
    case ErrorKind::InvalidBeta: return "InvalidBeta";
    case ErrorKind::SingleCluster: return "SingleCluster";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyScene: return "EmptyScene";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message,
             std::optional<std::int64_t> index)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      message_(message),
      index_(index) {}

}  // namespace dgn
