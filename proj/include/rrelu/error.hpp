#pragma once

#include <stdexcept>
#include <string>

namespace rrelu {

// Shape disagreement between operands (matmul inner dims, channel counts, ...).
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// A precondition of an operation's contract was violated (non-scalar loss,
// a-entry outside {+1,-1}, slopes-only training on a slope-free model, ...).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-supplied values (label out of range, empty held-out set, ...).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset file could not be parsed (wrong magic, truncated payload, ...).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint load failures, with a distinct kind per failure mode.
struct CheckpointError : std::runtime_error {
    enum class Kind { CorruptManifest, TruncatedBlob, Incompatible, Io };
    Kind kind;
    CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// A prune mask that cannot be realized structurally (empties a layer that is
// not eligible for full removal).
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    int epoch;
    DivergenceError(int ep, const std::string& msg) : std::runtime_error(msg), epoch(ep) {}
};

// Unsupported structure for a transformation (e.g. canonicalize on a layer
// with no absorbable weights).
struct UnsupportedStructureError : std::runtime_error {
    explicit UnsupportedStructureError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rrelu
