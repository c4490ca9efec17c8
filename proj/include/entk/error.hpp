#pragma once

#include <stdexcept>
#include <string>

namespace entk {

// Error categories, mapped to CLI exit codes in tools/entk_main.cpp.
enum class ErrorKind {
    Dimension,            // shape / extent mismatch
    Symmetry,             // matrix expected symmetric
    Convergence,          // iterative solver hit its cap
    NotPositiveDefinite,  // Cholesky pivot failure
    Spec,                 // invalid model specification
    Budget,               // estimated intermediates exceed memory budget
    Integrity,            // fingerprint or file-format mismatch
    Io,                   // filesystem failure
    IncompleteTile,       // read of a tile that was never committed
    Refused,              // refusing to overwrite existing output
    Usage,                // bad command line / option combination
    Numerical,            // a numerical check failed
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::Dimension: return "dimension";
        case ErrorKind::Symmetry: return "symmetry";
        case ErrorKind::Convergence: return "convergence";
        case ErrorKind::NotPositiveDefinite: return "not-positive-definite";
        case ErrorKind::Spec: return "spec";
        case ErrorKind::Budget: return "budget";
        case ErrorKind::Integrity: return "integrity";
        case ErrorKind::Io: return "io";
        case ErrorKind::IncompleteTile: return "incomplete-tile";
        case ErrorKind::Refused: return "refused";
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Numerical: return "numerical";
    }
    return "unknown";
}

}  // namespace entk
