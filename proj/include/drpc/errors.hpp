#pragma once

#include <stdexcept>
#include <string>

namespace drpc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or axis mismatch between tensors.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid or inconsistent experiment configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input data (labels out of range, values out of [0,1], ...).
struct DataError : Error {
  using Error::Error;
};

// Crop or region outside its map.
struct GeometryError : Error {
  using Error::Error;
};

// An API precondition was violated by the caller.
struct ContractViolation : Error {
  using Error::Error;
};

// Filesystem failures; carries the offending path in the message.
struct IoError : Error {
  using Error::Error;
};

// Non-finite loss or other numeric breakdown during training.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace drpc
