#pragma once

#include <stdexcept>
#include <string>

namespace ddgan {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand shapes incompatible with an op's contract.
struct ShapeError : Error {
    using Error::Error;
};

// Malformed config file, unknown key, or bad value.
struct ConfigError : Error {
    using Error::Error;
};

// Checkpoint / CSV / filesystem problems.
struct IoError : Error {
    using Error::Error;
};

// Training diverged (non-finite loss); carries a diagnostic dump.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace ddgan
