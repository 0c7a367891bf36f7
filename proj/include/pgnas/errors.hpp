#pragma once

#include <stdexcept>
#include <string>

namespace pgnas {

// Invalid or inconsistent configuration (bad spec fields, unknown keys, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, headers, labels, splits).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure: non-finite loss, domain violations, diverged state.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape contract violation. Messages name the offending shapes.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace pgnas
