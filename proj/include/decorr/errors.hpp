#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace decorr {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Raised by BN with epsilon = 0 when a row has (numerically) no variance.
/// This is the signature of complete collapse.
class DegenerateVariance : public Error {
 public:
  DegenerateVariance(std::size_t row, double variance)
      : Error("degenerate variance " + std::to_string(variance) + " in row " + std::to_string(row)),
        row_(row),
        variance_(variance) {}

  std::size_t row() const noexcept { return row_; }
  double variance() const noexcept { return variance_; }

 private:
  std::size_t row_;
  double variance_;
};

/// Raised when a centered Gram matrix cannot be whitened.
class RankDeficient : public Error {
 public:
  RankDeficient(double eigenvalue_ratio, std::size_t group)
      : Error("rank-deficient covariance in group " + std::to_string(group) +
              " (smallest/largest eigenvalue = " + std::to_string(eigenvalue_ratio) + ")"),
        ratio_(eigenvalue_ratio),
        group_(group) {}

  double eigenvalue_ratio() const noexcept { return ratio_; }
  std::size_t group() const noexcept { return group_; }

 private:
  double ratio_;
  std::size_t group_;
};

class CacheError : public Error {
 public:
  using Error::Error;
};

class ZeroNormError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

class InsufficientVariance : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace decorr
