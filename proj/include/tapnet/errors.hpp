#pragma once

#include <stdexcept>
#include <string>

namespace tapnet {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension / shape mismatches between arrays.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or out-of-range parameters.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent data content (CSV cells, labels, signals).
class DataError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failures (missing file, unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

// Checkpoint files that fail validation on load.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Command-line misuse (bad flags, missing required columns).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace tapnet
