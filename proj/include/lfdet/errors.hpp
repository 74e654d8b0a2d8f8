#pragma once

#include <stdexcept>
#include <string>

namespace lfdet {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid head, level, or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid user data: degenerate boxes, out-of-range probabilities, GTs outside the image.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed structured document.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a precondition that valid inputs can never trigger.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace lfdet
