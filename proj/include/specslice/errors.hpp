#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace specslice {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A Cholesky pivot was nonpositive. `column` is the failing column.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(const std::string& what, std::ptrdiff_t column)
      : Error(what), column_(column) {}
  std::ptrdiff_t column() const noexcept { return column_; }

 private:
  std::ptrdiff_t column_;
};

/// A shifted matrix has a numerically zero pivot: the shift collides with an
/// eigenvalue and has to be perturbed before the factor can be used.
class SingularPivot : public Error {
 public:
  using Error::Error;
};

/// Malformed input file or manifest. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid user-supplied configuration or arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Some slices still report missing eigenvalues.
class OutstandingMissing : public Error {
 public:
  OutstandingMissing(const std::string& what, std::vector<int> slices)
      : Error(what), slices_(std::move(slices)) {}
  const std::vector<int>& slices() const noexcept { return slices_; }

 private:
  std::vector<int> slices_;
};

/// Missing-eigenvalue recovery ran out of rounds.
class RecoveryExhausted : public Error {
 public:
  RecoveryExhausted(const std::string& what, std::vector<int> slices,
                    std::vector<std::ptrdiff_t> deficits)
      : Error(what), slices_(std::move(slices)), deficits_(std::move(deficits)) {}
  const std::vector<int>& slices() const noexcept { return slices_; }
  const std::vector<std::ptrdiff_t>& deficits() const noexcept { return deficits_; }

 private:
  std::vector<int> slices_;
  std::vector<std::ptrdiff_t> deficits_;
};

}  // namespace specslice
