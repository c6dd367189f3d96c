#ifndef CAPGEN_ERROR_HPP_
#define CAPGEN_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace capgen {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Shapes or extents do not line up (matmul inner dims, concat axes, ...).
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// An argument lies outside the domain of the operation (empty corpus, n < 3).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated binary/text input.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Text-format parse failure carrying the 1-based line number.
class ParseError : public FormatError {
 public:
  ParseError(const std::string& what, size_t line)
      : FormatError("line " + std::to_string(line) + ": " + what), line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

/// Inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Four-point geometry that admits no invertible homography.
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant failed at runtime (e.g. attention weights off the simplex).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace capgen

#endif  // CAPGEN_ERROR_HPP_
