#pragma once

#include <stdexcept>
#include <string>

namespace streamvb {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model specification or configuration rejected by validation.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Vectors or statistics whose sizes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A predictor outside its declared range, an unknown group or a bad index.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Breakdown of the variational updates (failed factorization, NaN, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed input document (CSV, JSON, binary payload).
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace streamvb
