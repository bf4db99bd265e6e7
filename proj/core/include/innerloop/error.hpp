#pragma once

#include <stdexcept>
#include <string>

namespace innerloop {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or precondition violation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or mismatched file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered during a numeric computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A call outside an operation's contract (e.g. dual-form reconstruction of
// an AdamW run, or data that was never recorded).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace innerloop
