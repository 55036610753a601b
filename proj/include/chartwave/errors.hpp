#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace chartwave {

/// Base class for every domain error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

/// Raised when the margin of a category with no sampled patients would need
/// correcting.
class UncorrectableMarginError : public Error {
 public:
  using Error::Error;
};

/// Config validation failure; carries every violated constraint.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Operation not allowed in the session's current status.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A submitted wave of review records does not match the pending allocation.
class RecordError : public Error {
 public:
  RecordError(std::string message, std::vector<std::string> offending_ids);
  const std::vector<std::string>& offending_ids() const { return offending_; }

 private:
  std::vector<std::string> offending_;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace chartwave
