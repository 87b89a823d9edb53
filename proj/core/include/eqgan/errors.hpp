#pragma once

#include <stdexcept>
#include <string>

namespace eqgan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented contract (bad ratio, non-simplex weights, shape mismatch...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Configuration cannot produce a well-formed model or run.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

/// An API was called in the wrong order or with missing prerequisites.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss. `what()` carries the diagnostic dump.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace eqgan
