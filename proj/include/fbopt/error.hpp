#pragma once

#include <stdexcept>
#include <string>

namespace fbopt {

// Failure classes surfaced through the C API and CLI exit codes.
enum class ErrorKind {
  InvalidArgument,
  Config,
  GridMismatch,
  NoBoundary,
  EmptyPositivity,
  Underpowered,
  Instability,
  StepFailure,
  NotSaturable,
  Io,
  CorruptCheckpoint,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const char* what) {
  if (!cond) [[unlikely]] fail(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) [[unlikely]] fail(kind, what);
}

}  // namespace fbopt
