#pragma once

#include <stdexcept>
#include <string>

namespace gpvs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problems with input data: unreadable files, missing values, bad shapes.
class DataError : public Error {
 public:
  enum class Code {
    Io,
    Parse,
    MissingValue,
    MissingColumn,
    TooFewRows,
    BadCensoring,
    BadResponse,
    Shape,
  };

  DataError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// Factorization failures, non-finite kernels, Bessel overflow.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpvs
