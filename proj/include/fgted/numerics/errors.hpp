#pragma once

#include <stdexcept>
#include <string>

namespace fgted {

// Root of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not satisfy a primitive's rule.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A computation produced (or would produce) a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// The caller violated an API precondition.
class UsageError : public Error {
 public:
  using Error::Error;
};

// An object was used in a state that does not permit the call.
class StateError : public Error {
 public:
  using Error::Error;
};

// Input data is malformed or inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

// A configuration violates its invariants.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fgted
