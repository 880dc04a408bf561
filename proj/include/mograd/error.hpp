#pragma once

#include <stdexcept>
#include <string>

namespace mograd {

/// Base of every error thrown by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (missing instruction, invalid limits).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Violated operation precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Model output that cannot be mapped onto the expected structure.
class ParseError : public Error {
 public:
  using Error::Error;
};

class InvalidModeError : public Error {
 public:
  using Error::Error;
};

/// Correlation is undefined because one of the series is constant.
class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Transport-level failure; retriable by the caller.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Upstream answered with a payload we cannot use.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ReplayMissError : public Error {
 public:
  explicit ReplayMissError(std::string fingerprint)
      : Error("replay miss: no fixture for request fingerprint " + fingerprint),
        fingerprint_(std::move(fingerprint)) {}

  const std::string& fingerprint() const noexcept { return fingerprint_; }

 private:
  std::string fingerprint_;
};

/// Malformed dataset or world file; carries the 1-based line number when known.
class DatasetError : public Error {
 public:
  DatasetError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace mograd
