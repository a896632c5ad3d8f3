#pragma once

#include <stdexcept>
#include <string>

namespace adlah {

// Error hierarchy used across the library. Every message names the
// offending field, value or path so CLI exits are actionable.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// State-machine / bookkeeping violations (out-of-order events, missing
// pending transition, ...).
struct ConsistencyError : Error {
    using Error::Error;
};

}  // namespace adlah
