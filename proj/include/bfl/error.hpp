#pragma once

#include <stdexcept>
#include <string>

namespace bfl {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fields or operator stages living on different grids.
struct AlignmentError : Error {
    using Error::Error;
};

/// A speed sample outside the declared [alpha, beta] band.
struct CoefficientBoundError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

/// Non-finite values appeared while time stepping.
struct DivergenceError : Error {
    DivergenceError(const std::string& what, long step) : Error(what), step_index(step) {}
    long step_index;
};

struct ConfigError : Error {
    using Error::Error;
};

struct InternalError : Error {
    using Error::Error;
};

} // namespace bfl
