#pragma once

#include <stdexcept>
#include <string>

namespace fedgraph {

// Shape/dimension mismatch in a numeric or model operation.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct PreconditionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input file.
struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A client ended up without labeled training nodes; retry with another seed.
struct PartitionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExchangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Request for embeddings below layer 2 (would expose raw features).
struct PrivacyViolation : ExchangeError {
    using ExchangeError::ExchangeError;
};

// Request for a node that is not a registered boundary neighbour of the requester.
struct AuthorizationError : ExchangeError {
    using ExchangeError::ExchangeError;
};

struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A federated round failed; global weights were left untouched.
struct RoundAborted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fedgraph
