#pragma once

#include <stdexcept>
#include <string>

namespace reid {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape / dimensionality disagreement between operands.
struct DimensionError : Error {
    using Error::Error;
};

// A caller violated an operation precondition.
struct ContractError : Error {
    using Error::Error;
};

// NaN / overflow / other numeric breakdown.
struct NumericError : Error {
    using Error::Error;
};

// Filesystem and serialization failures.
struct IoError : Error {
    using Error::Error;
};

// Invalid run configuration (bad keys, bad values, inconsistent presets).
struct ConfigError : Error {
    using Error::Error;
};

// Dataset content violates the dataset invariants (gaps, duplicates, ...).
struct DataError : Error {
    using Error::Error;
};

// Evaluation protocol violation (probe identity absent from gallery, ...).
struct ProtocolError : Error {
    using Error::Error;
};

}  // namespace reid
