#pragma once

#include <stdexcept>
#include <string>

namespace coast {

// Root of every error thrown by the library. The CLI maps the subclasses
// onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two parameter containers do not share an architecture, or a flat buffer
// has the wrong length.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// NaN or otherwise unusable floating point input.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or preconditions on experiment parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Local training diverged.
class TrainingError : public Error {
 public:
  TrainingError(int round, int client, const std::string& what)
      : Error("training diverged at round " + std::to_string(round) +
              ", client " + std::to_string(client) + ": " + what),
        round_(round),
        client_(client) {}

  int round() const { return round_; }
  int client() const { return client_; }

 private:
  int round_;
  int client_;
};

// Requested computation exceeds what the exact algorithms support.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// A cross-round window has no future rounds to look at.
class EmptyWindowError : public Error {
 public:
  using Error::Error;
};

// File system failures. The message always carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

// A persisted log failed its checksum, version or structure check.
class CorruptLogError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace coast
