#ifndef TOMALIGN_ERROR_HPP
#define TOMALIGN_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace tomalign {

enum class ErrorKind {
  range,
  empty_input,
  shape,
  degenerate_area,
  parse,
  missing_dimension,
  backend,
  judge_unparseable,
  config,
  validation,
  conflict,
  not_found,
  state,
  io,
};

constexpr std::string_view kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::range: return "RangeError";
    case ErrorKind::empty_input: return "EmptyInput";
    case ErrorKind::shape: return "ShapeError";
    case ErrorKind::degenerate_area: return "DegenerateArea";
    case ErrorKind::parse: return "ParseError";
    case ErrorKind::missing_dimension: return "MissingDimension";
    case ErrorKind::backend: return "BackendError";
    case ErrorKind::judge_unparseable: return "JudgeUnparseable";
    case ErrorKind::config: return "ConfigError";
    case ErrorKind::validation: return "ValidationError";
    case ErrorKind::conflict: return "ConflictError";
    case ErrorKind::not_found: return "NotFound";
    case ErrorKind::state: return "StateError";
    case ErrorKind::io: return "IOError";
  }
  return "Error";
}

/// Base of every error raised by the library. `kind()` lets transport
/// layers (HTTP API, CLI) map failures without a dynamic_cast ladder.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <ErrorKind Kind>
class KindError : public Error {
 public:
  explicit KindError(const std::string& message) : Error(Kind, message) {}
};

using RangeError = KindError<ErrorKind::range>;
using EmptyInput = KindError<ErrorKind::empty_input>;
using ShapeError = KindError<ErrorKind::shape>;
using DegenerateArea = KindError<ErrorKind::degenerate_area>;
using ParseError = KindError<ErrorKind::parse>;
using BackendError = KindError<ErrorKind::backend>;
using JudgeUnparseable = KindError<ErrorKind::judge_unparseable>;
using ConfigError = KindError<ErrorKind::config>;
using ValidationError = KindError<ErrorKind::validation>;
using ConflictError = KindError<ErrorKind::conflict>;
using NotFound = KindError<ErrorKind::not_found>;
using StateError = KindError<ErrorKind::state>;
using IOError = KindError<ErrorKind::io>;

class MissingDimension : public Error {
 public:
  explicit MissingDimension(std::string dimension)
      : Error(ErrorKind::missing_dimension,
              "judge response is missing dimension '" + dimension + "'"),
        dimension_(std::move(dimension)) {}

  const std::string& dimension() const noexcept { return dimension_; }

 private:
  std::string dimension_;
};

}  // namespace tomalign

#endif  // TOMALIGN_ERROR_HPP
