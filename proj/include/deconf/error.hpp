#pragma once

#include <stdexcept>
#include <string>

namespace deconf {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape mismatch between operands; message names both shapes.
struct DimensionError : Error {
  using Error::Error;
};

/// Semantically invalid values (negative weights, bad ranges, ...).
struct DataError : Error {
  using Error::Error;
};

/// Problems while reading external files (unknown ids, malformed rows).
struct IngestError : Error {
  using Error::Error;
};

/// Structural problems with an input file (missing column, bad header).
struct SchemaError : Error {
  using Error::Error;
};

/// Numerical failure (non-finite loss, singular system).
struct NumericError : Error {
  using Error::Error;
};

/// Invalid configuration (unknown ablation kind, empty selector).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace deconf
