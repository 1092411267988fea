#pragma once

#include <stdexcept>
#include <string>

namespace ckd {

// Malformed or unusable input data (parse failures, empty 5-core, bad splits).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A loss or parameter became non-finite during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or argument combination.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace ckd
