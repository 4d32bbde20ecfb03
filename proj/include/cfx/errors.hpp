#pragma once

#include <stdexcept>
#include <string>

namespace cfx {

// Base for all recoverable errors raised by the library. The CLI maps these
// to exit code 1; anything else is treated as an internal error (exit 2).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape disagreement. Messages name both shapes.
struct DimError : Error {
  using Error::Error;
};

// Invalid runtime value: out-of-range id, bad label, malformed span.
struct InputError : Error {
  using Error::Error;
};

// Invalid configuration (sizes, fractions, missing fields).
struct ConfigError : Error {
  using Error::Error;
};

// Unreadable or inconsistent file content (CSV, vocab, checkpoint).
struct FormatError : Error {
  using Error::Error;
};

}  // namespace cfx
