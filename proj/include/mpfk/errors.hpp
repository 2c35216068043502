#pragma once

#include <stdexcept>
#include <string>

namespace mpfk {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown format name, malformed bit pattern, or value not representable.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Operation not available for the requested format (FP128 is metadata only).
class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not agree, or an entry is not finite.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Integer accumulation could overflow for the requested slice width and depth.
class OverflowGuardError : public Error {
 public:
  using Error::Error;
};

/// A pivot became exactly zero in the working precision.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// Configuration value outside its documented domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Hardware spec or benchmark record is missing data or malformed.
class SpecError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpfk
