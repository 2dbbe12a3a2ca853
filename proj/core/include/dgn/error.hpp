#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dgn {

/// Failure categories raised by the library. The CLI maps these onto exit
/// codes, so new kinds must be classified in tools/commands.cpp as well.
enum class ErrorKind {
  ZeroVectorRow,
  NonUnitInput,
  DimensionMismatch,
  DegenerateRow,
  InvalidParams,
  EmptyLabelSet,
  InvalidBeta,
  SingleCluster,
  ShapeMismatch,
  StaleCache,
  LengthMismatch,
  EmptyScene,
  InvalidArgument,
  ParseError,
  IoError,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::int64_t> index = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix that what() carries.
  const std::string& message() const noexcept { return message_; }

  /// Row, class, line or byte offset the failure refers to, when there is one.
  std::optional<std::int64_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::string message_;
  std::optional<std::int64_t> index_;
};

}  // namespace dgn
