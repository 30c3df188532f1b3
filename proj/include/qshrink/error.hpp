#pragma once

#include <stdexcept>
#include <string>

namespace qshrink {

// Error classes map one-to-one onto CLI exit codes (see cli.hpp).
enum class ErrorKind {
  domain = 2,       // argument outside its admissible range
  data = 3,         // malformed or inconsistent input data
  numerical = 4,    // singular system, failed estimate
  convergence = 5,  // iteration budget exhausted
  io = 6,           // file system failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

struct ConvergenceError : Error {
  ConvergenceError(const std::string& what, double residual)
      : Error(ErrorKind::convergence, what), kkt_residual(residual) {}
  double kkt_residual;
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

inline void require_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw DomainError("quantile level tau must lie in (0,1), got " + std::to_string(tau));
  }
}

}  // namespace qshrink
