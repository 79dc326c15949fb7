#pragma once

#include <stdexcept>
#include <string>

namespace dtsda {

// Values double as process exit codes and C API status codes.
enum class ErrorKind : int {
  Config = 2,
  Data = 3,
  Numeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

// Tensor shapes that do not fit together. Reported as a data error.
struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

}  // namespace dtsda
