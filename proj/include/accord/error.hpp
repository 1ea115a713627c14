#pragma once

#include <stdexcept>
#include <string>

namespace accord {

// Exit-code aware error hierarchy. The CLI maps each kind onto a process
// exit status; library callers can catch accord::Error generically.
enum class ErrorKind { Usage = 2, NonConvergence = 3, Io = 4, Numeric = 5 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

/// Raised by gram() when p exceeds the configured dense cap; callers fall
/// back to the matrix-free path through X.
class DenseCapExceeded : public Error {
 public:
  explicit DenseCapExceeded(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

}  // namespace accord
