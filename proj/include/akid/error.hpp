#pragma once

#include <stdexcept>
#include <string>

namespace akid {

// Base of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents that do not fit a kernel or a block.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration: bad layer parameters, unknown keys, bad wiring.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A name (block, variable, tensor, file entry) that does not resolve.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Calling an operation in the wrong lifecycle state (forward before setup...).
class StateError : public Error {
 public:
  using Error::Error;
};

// File format, integrity and filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace akid
