#pragma once

#include <stdexcept>
#include <string>

namespace led {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: ConfigError -> 1, DataError -> 2, NumericError -> 3.

// Invalid configuration, usage, or architecture mismatch.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape/dimension mismatch between arrays. Message names both shapes.
class ShapeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Malformed or inconsistent input data (scene files, checkpoints).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller contract was violated (scalar-ness, frozen flags, sigma > 0).
class ContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace led
