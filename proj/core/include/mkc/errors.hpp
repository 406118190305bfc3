#pragma once

#include <stdexcept>
#include <string>

namespace mkc {

// Base class for every error raised by the codec. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, shapes or arguments supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable, truncated or malformed input data (images, bitstreams,
// checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mkc
