#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace poselab {

// Base class for all poselab errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value (bad window sizes, odd head dim, alpha < 1, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Problems with input data (corpus too short, bad token ids, ...).
struct DataError : Error {
    using Error::Error;
};

// Source text shorter than what the sampled layout requires.
struct TextTooShortError : DataError {
    using DataError::DataError;
};

// Malformed file contents; carries the byte offset of the first bad byte.
struct ParseError : DataError {
    ParseError(const std::string& msg, std::uint64_t offset)
        : DataError(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::uint64_t byte_offset;
};

struct IoError : Error {
    using Error::Error;
};

// Tensor shape mismatch in a numeric routine.
struct ShapeError : Error {
    using Error::Error;
};

// Non-finite value produced during a forward/backward pass; carries the
// index of the layer that produced it (-1 for embedding, n_layers for head).
struct NumericError : Error {
    NumericError(const std::string& msg, int layer_index)
        : Error(msg + " (layer " + std::to_string(layer_index) + ")"),
          layer(layer_index) {}
    int layer;
};

// API misuse, e.g. backward without a matching forward cache.
struct UsageError : Error {
    using Error::Error;
};

}  // namespace poselab
