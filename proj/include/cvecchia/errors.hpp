#ifndef CVECCHIA_ERRORS_HPP_
#define CVECCHIA_ERRORS_HPP_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace cvecchia {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A Cholesky pivot fell below tolerance. `column()` names the Vecchia
/// factor column when the failure happened while building a factor.
class NotPositiveDefinite : public Error {
 public:
  explicit NotPositiveDefinite(const std::string& what,
                               std::optional<std::size_t> column = std::nullopt)
      : Error(what), column_(column) {}
  std::optional<std::size_t> column() const { return column_; }

 private:
  std::optional<std::size_t> column_;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class NegativeNoise : public Error {
 public:
  using Error::Error;
};

class ZeroNoise : public Error {
 public:
  using Error::Error;
};

class InvalidShape : public Error {
 public:
  using Error::Error;
};

class EmptyTestSet : public Error {
 public:
  using Error::Error;
};

class MissingColumn : public Error {
 public:
  using Error::Error;
};

class DivergenceDetected : public Error {
 public:
  using Error::Error;
};

/// Dense O(n^3) work requested above the supported size.
class DenseLimitExceeded : public Error {
 public:
  using Error::Error;
};

/// Unknown registry identifier (model id, strategy id, scenario name).
class UnknownIdentifier : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::string column)
      : Error(what), row_(row), column_(std::move(column)) {}
  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

}  // namespace cvecchia

#endif  // CVECCHIA_ERRORS_HPP_
