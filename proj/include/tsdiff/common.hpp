#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tsdiff {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the zero-based row (and column, when known).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column = npos)
      : Error(what), row_(row), column_(column) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf or hit a singular system.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, long long step = -1)
      : Error(what), step_(step) {}

  /// Offending iteration or diffusion step, -1 when not applicable.
  long long step() const noexcept { return step_; }

 private:
  long long step_;
};

/// Corrupt, truncated or incompatible binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration (unknown key, bad value, missing path).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsdiff
