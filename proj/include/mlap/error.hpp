#pragma once

#include <stdexcept>
#include <string>

namespace mlap {

// Invalid configuration, shapes, or flag combinations. CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent data files. CLI exit code 4.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// File system failures (open/read/write/truncation). CLI exit code 4.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure at runtime (NaN loss, degenerate statistic asked to do
// the impossible). CLI exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse by calling code (e.g. backward on a non-scalar).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace mlap
