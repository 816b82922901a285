#pragma once

#include <stdexcept>
#include <string>

namespace vprof {

/// Error categories surfaced by the library. The CLI maps these to exit codes;
/// "negative results" (no connection found, hypothesis failed, ...) are *not*
/// errors and are returned as data.
enum class ErrorKind {
    InvalidInput,
    NumericFailure,
    NoContraction,
    NoConvergence,
    Hyperbolicity,
    DegenerateEigenvalue,
    Domain,
    Range,
    Stiffness,
    SingularReduction,
    Classification,
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::InvalidInput: return "invalid-input";
        case ErrorKind::NumericFailure: return "numeric-failure";
        case ErrorKind::NoContraction: return "no-contraction";
        case ErrorKind::NoConvergence: return "no-convergence";
        case ErrorKind::Hyperbolicity: return "hyperbolicity";
        case ErrorKind::DegenerateEigenvalue: return "degenerate-eigenvalue";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Range: return "range";
        case ErrorKind::Stiffness: return "stiffness";
        case ErrorKind::SingularReduction: return "singular-reduction";
        case ErrorKind::Classification: return "classification";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

} // namespace vprof
