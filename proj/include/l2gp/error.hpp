#ifndef L2GP_ERROR_HPP_
#define L2GP_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace l2gp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A batch-statistics mode was asked to work with fewer than two samples.
class BatchSizeError : public Error {
 public:
  using Error::Error;
};

/// A class index is outside [0, K).
class IndexError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A configuration value or dataset is unusable.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed; the message carries the offending line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A forward operation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace l2gp

#endif  // L2GP_ERROR_HPP_
