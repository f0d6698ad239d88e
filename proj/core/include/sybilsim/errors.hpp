#pragma once

#include <stdexcept>
#include <string>

namespace sybilsim {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vectors or matrices whose shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// An experiment or aggregator configuration is semantically invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A data file is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace sybilsim
