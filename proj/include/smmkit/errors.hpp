#pragma once

#include <stdexcept>
#include <string>

namespace smm {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between tensors/layers.
struct DimensionError : Error {
    using Error::Error;
};

/// Invalid argument value (out of range, wrong enum, empty input, ...).
struct ArgumentError : Error {
    using Error::Error;
};

/// Operation called in the wrong order (e.g. backward before forward).
struct StateError : Error {
    using Error::Error;
};

/// Model cannot be assembled from the given hyperparameters.
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed input file; message carries the line number where known.
struct ParseError : Error {
    using Error::Error;
};

/// Underlying read/write failure.
struct IoError : Error {
    using Error::Error;
};

/// Parameter file does not match the expected binary layout.
struct FormatError : Error {
    using Error::Error;
};

/// Parameter file has an unsupported format version.
struct VersionError : Error {
    using Error::Error;
};

/// Source parameters cannot be applied to the target architecture.
struct TransferError : Error {
    using Error::Error;
};

} // namespace smm
