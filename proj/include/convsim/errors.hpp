#pragma once

#include <stdexcept>
#include <string>

namespace convsim {

// Error taxonomy mirrored by the CLI exit codes: usage errors are handled by
// the argument parser, DataError maps to exit 2, NumericError to exit 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

// Non-finite values, degenerate norms, undefined correlations.
struct NumericError : Error {
    using Error::Error;
};

// Unreadable files, malformed formats, version mismatches.
struct DataError : Error {
    using Error::Error;
};

}  // namespace convsim
