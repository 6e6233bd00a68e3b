#pragma once

#include <stdexcept>
#include <string>

namespace mirrorfdr {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, missing columns, out-of-domain arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A computation could not be carried out in floating point.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Zero dispersion (all values equal), so the symmetry statistic is undefined.
class DegenerateSampleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Density estimate at the median is below the floor, or the bandwidth is zero.
class IllConditionedError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace mirrorfdr
