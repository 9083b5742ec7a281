#pragma once

#include <stdexcept>
#include <string>

namespace transfuse {

// Error taxonomy used across the library. The CLI maps anything derived
// from Error to exit code 2; usage problems are handled before throwing.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotFoundError : Error {
    using Error::Error;
};

struct DecodeError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct EmptyDatasetError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

struct LayoutError : Error {
    using Error::Error;
};

}  // namespace transfuse
