#pragma once

#include <stdexcept>
#include <string>

namespace gcs {

// Bad argument to a library call (malformed one-hot, non-finite sample, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// All constellation points are zero, so no normalization scale exists.
class DegenerateConstellation : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cholesky / innovation solve failed or the filter produced non-finite values.
class NumericalBreakdown : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation needs a differentiable channel.
class UnsupportedChannel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every grid-search cell diverged.
class SearchFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gcs
