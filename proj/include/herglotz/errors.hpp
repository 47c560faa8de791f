#pragma once

#include <stdexcept>
#include <string>

namespace herglotz {

/// Base class for every error thrown by the engine.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input to the command line or a scenario file.
struct UsageError : Error {
    using Error::Error;
};

}  // namespace herglotz
