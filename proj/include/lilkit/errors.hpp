#pragma once

#include <stdexcept>
#include <string>

namespace lilkit {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or mismatched shapes.
struct InputError : Error {
    using Error::Error;
};
/// Rejection sampler exhausted its attempt budget.
struct SamplingError : Error {
    using Error::Error;
};
/// A condition or estimate could not be certified (e.g. a diverging integral).
struct CertificationError : Error {
    using Error::Error;
};
/// A coupling kernel produced an inconsistent branch probability.
struct ConstructionError : Error {
    using Error::Error;
};
/// A problem exceeded its configured size budget.
struct BudgetError : Error {
    using Error::Error;
};
/// No truncation order meets the requested tail tolerance.
struct TruncationError : Error {
    using Error::Error;
};
/// Path construction preconditions failed.
struct PathError : Error {
    using Error::Error;
};
/// Configuration parsing or validation failed.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace lilkit
