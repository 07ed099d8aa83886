#pragma once

#include <stdexcept>
#include <string>

namespace spsb {

// Bad configuration value (qubit count, epsilon, batch size, unknown key...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or insufficient input data (IDX files, labels).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated internal contract: shape mismatch, unbound angle, bad index.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// API misuse such as running backward twice over one tape.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Training produced a non-finite loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spsb
