#pragma once

#include <stdexcept>
#include <string>

namespace cellguard {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file: bad numeric cell, ragged row, too few rows.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A column whose robust dispersion is zero or that has too few observed cells.
class DegenerateColumnError : public Error {
 public:
  DegenerateColumnError(long column, const std::string& what)
      : Error(what), column_(column) {}
  long column() const noexcept { return column_; }

 private:
  long column_;
};

/// A scatter matrix (or one of its observed-pattern blocks) failed Cholesky.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// An iterative procedure could not produce a result at all.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cellguard
