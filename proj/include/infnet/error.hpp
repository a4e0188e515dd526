#pragma once

#include <stdexcept>
#include <string>

namespace infnet {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape / dimension mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset, schema violation, or invalid example.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Metric is undefined on the given inputs (e.g. single-class AUC).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure or corrupt/truncated artifact file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace infnet
