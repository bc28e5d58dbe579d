#pragma once

#include <stdexcept>
#include <string>

namespace punct {

// Base of everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Error families. The CLI maps each family to a stable exit code:
// config -> 2, data -> 3, numeric -> 4, checkpoint -> 5.
struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct CheckpointError : Error {
    using Error::Error;
};

// Data errors (file contents, wiring between inputs).
struct BadMagic : DataError {
    using DataError::DataError;
};
struct TruncatedFile : DataError {
    using DataError::DataError;
};
struct NonFiniteValue : DataError {
    using DataError::DataError;
};
struct ParseError : DataError {
    using DataError::DataError;
};
struct InvariantViolation : DataError {
    using DataError::DataError;
};
struct NotAProbability : DataError {
    using DataError::DataError;
};
struct EmptyDataset : DataError {
    using DataError::DataError;
};
struct TokenIndexMismatch : DataError {
    using DataError::DataError;
};
struct LengthMismatch : DataError {
    using DataError::DataError;
};
struct ShapeMismatch : DataError {
    using DataError::DataError;
};
struct IoFailure : DataError {
    using DataError::DataError;
};

// Numeric errors (training blow-ups).
struct NonFiniteActivation : NumericError {
    using NumericError::NumericError;
};

// Config errors with a dedicated identity.
struct NonPositiveOutput : ConfigError {
    using ConfigError::ConfigError;
};

// Checkpoint errors.
struct VersionMismatch : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CorruptCheckpoint : CheckpointError {
    using CheckpointError::CheckpointError;
};

// Using a forward cache after the model has been stepped.
struct StaleCache : Error {
    using Error::Error;
};

}  // namespace punct
