#pragma once

#include <stdexcept>
#include <string>

namespace msbdl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition or malformed input (dimensions, invalid trees, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A factorization, iterative solve or likelihood evaluation failed.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Rejected configuration; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace msbdl
