#pragma once

#include <stdexcept>
#include <string>

namespace vivit {

// Dimension or argument mismatch detected before any computation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced by a forward op, or a non-finite loss during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Misuse of the autodiff tape (non-scalar loss, repeated backward, ...).
class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Unreadable/corrupt volume, manifest or checkpoint files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid run or model configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace vivit
