#pragma once
#include <stdexcept>
#include <string>

namespace vinegof {

// Error taxonomy. Everything derives from Error so callers can catch the
// whole family; the CLI maps subtypes onto exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad inputs / bad requests (CLI exit 2)
struct InvalidParameter : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct IncompatibleTau : Error { using Error::Error; };
struct DegenerateSample : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct StructureError : Error { using Error::Error; };

// Optimization failures (CLI exit 3)
struct OptimizationError : Error { using Error::Error; };
struct ConvergenceError : Error { using Error::Error; };
struct FitError : Error { using Error::Error; };

// Unsupported requests (CLI exit 4)
struct UnsupportedFamily : Error { using Error::Error; };
struct UnsupportedRequest : Error { using Error::Error; };

// Internal numerical failures (CLI exit 5)
struct NumericalError : Error { using Error::Error; };
struct SingularHessian : Error { using Error::Error; };

} // namespace vinegof
