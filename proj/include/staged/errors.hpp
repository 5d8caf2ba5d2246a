#pragma once

#include <stdexcept>
#include <string>

namespace staged {

/// Category of a failure. Each maps onto one CLI exit code.
enum class ErrorKind {
  config,     // bad configuration or usage (exit 1)
  data,       // input data failed validation (exit 2)
  numeric,    // shape mismatch, non-finite values, divergence (exit 3)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::config: return 1;
      case ErrorKind::data: return 2;
      case ErrorKind::numeric: return 3;
    }
    return 3;
  }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, "config error: " + what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, "data error: " + what) {}
};

/// Sample sets of two inputs that should describe the same samples do not.
struct AlignmentError : Error {
  explicit AlignmentError(const std::string& what) : Error(ErrorKind::data, "alignment error: " + what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::numeric, "shape error: " + what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, "numeric error: " + what) {}
};

/// An argument outside the mathematical domain of an operation.
struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorKind::numeric, "domain error: " + what) {}
};

}  // namespace staged
