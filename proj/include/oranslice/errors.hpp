#pragma once

#include <stdexcept>
#include <string>

namespace oranslice {

// Bad or infeasible configuration (action grid, slice weights, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Traffic calibration could not hit the requested mean.
class CalibrationError : public std::runtime_error {
 public:
  explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed trace file (parse failure, non-monotone timestamps).
class TraceError : public std::runtime_error {
 public:
  explicit TraceError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite value produced by the learner; the run must abort.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Policy directory failures (missing key, hash/version mismatch, I/O).
class PolicyStoreError : public std::runtime_error {
 public:
  explicit PolicyStoreError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace oranslice
