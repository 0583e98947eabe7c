#pragma once

#include <stdexcept>
#include <string>

namespace lsf {

// Maps onto the CLI exit codes: usage -> 1, data -> 2, divergence -> 3.
enum class ErrorKind { usage = 1, data = 2, divergence = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed, inconsistent or missing input data (files, manifests, labels).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// A loss or parameter became non-finite during training.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorKind::divergence, what) {}
};

/// Invalid arguments supplied by the caller.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

}  // namespace lsf
