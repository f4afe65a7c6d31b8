#pragma once

#include <stdexcept>
#include <string>

namespace zsl {

enum class ErrorKind {
  Io,         // missing/unreadable files, malformed on-disk data
  Config,     // invalid run configuration or contract violation
  Numerical,  // Cholesky failure, non-finite values during optimization
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  // Process exit code contract: 1 numerical failure, 2 I/O or config error.
  int exit_code() const { return kind_ == ErrorKind::Numerical ? 1 : 2; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_io(const std::string& msg) {
  throw Error(ErrorKind::Io, msg);
}
[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorKind::Config, msg);
}
[[noreturn]] inline void throw_numerical(const std::string& msg) {
  throw Error(ErrorKind::Numerical, msg);
}

}  // namespace zsl
