#pragma once

#include <stdexcept>
#include <string>

namespace confrank {

// Base class for all toolkit errors. Subclasses map onto the stable CLI
// exit-code contract: validation (2), transport (3), insufficient data (4).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
    using Error::Error;
};

struct InsufficientData : Error {
    using Error::Error;
};

struct DegenerateSeries : Error {
    using Error::Error;
};

struct InconsistentSurrogate : Error {
    using Error::Error;
};

struct SchemaViolation : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct TransportError : Error {
    TransportError(const std::string& what, int status)
        : Error(what), last_status(status) {}
    int last_status = 0;
};

struct AuthError : Error {
    using Error::Error;
};

struct InsufficientAnchors : Error {
    using Error::Error;
};

struct InsufficientCandidates : Error {
    using Error::Error;
};

}  // namespace confrank
