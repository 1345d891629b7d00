#pragma once

#include <stdexcept>
#include <string>

namespace rpgd {

// Base class for all library errors. Everything user-facing derives from
// this so the CLI can map any library failure to one exit code.
struct Error : std::runtime_error {
    explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// A field or argument is outside its allowed range. The message names the
// offending field.
struct RangeError : Error {
    explicit RangeError(const std::string &field, const std::string &detail = "")
        : Error(detail.empty() ? "range error: " + field
                               : "range error: " + field + " (" + detail + ")"),
          field(field) {}
    std::string field;
};

// Two sequences that must agree in length do not.
struct LengthMismatch : Error {
    LengthMismatch(const std::string &what, std::size_t lhs, std::size_t rhs)
        : Error("length mismatch in " + what + ": " + std::to_string(lhs) +
                " vs " + std::to_string(rhs)) {}
};

struct IndexOutOfRange : Error {
    IndexOutOfRange(const std::string &what, long long index, std::size_t bound)
        : Error("index out of range in " + what + ": " + std::to_string(index) +
                " not in [0, " + std::to_string(bound) + ")") {}
};

// Context tokens do not belong to the adapter's vocabulary.
struct VocabMismatch : Error {
    explicit VocabMismatch(const std::string &msg) : Error("vocab mismatch: " + msg) {}
};

// Remote adapter could not reach or talk to the endpoint.
struct TransportError : Error {
    explicit TransportError(const std::string &msg) : Error("transport error: " + msg) {}
};

// Remote adapter reached the endpoint but the payload is malformed.
struct ProtocolError : Error {
    explicit ProtocolError(const std::string &msg) : Error("protocol error: " + msg) {}
};

// The model itself reported a failure.
struct ModelError : Error {
    explicit ModelError(const std::string &msg) : Error("model error: " + msg) {}
};

// An assertion references a pivot id that the reasoning chain does not define.
struct UnresolvedPivot : Error {
    explicit UnresolvedPivot(const std::string &pivot_id)
        : Error("unresolved pivot: " + pivot_id) {}
};

// Pivot spans overlap or are out of order.
struct OverlapError : Error {
    explicit OverlapError(const std::string &msg) : Error("span overlap: " + msg) {}
};

// Counterfactual selection found no same-category candidate.
struct NoCandidate : Error {
    explicit NoCandidate(const std::string &msg) : Error("no candidate: " + msg) {}
};

// A rewriter/scorer client failed.
struct ClientError : Error {
    explicit ClientError(const std::string &msg) : Error("client error: " + msg) {}
};

// A client response violated a pipeline containment check.
struct ValidationError : Error {
    explicit ValidationError(const std::string &msg) : Error("validation error: " + msg) {}
};

// Wrong number of arguments to a fixed-arity operation.
struct ArityError : Error {
    explicit ArityError(const std::string &msg) : Error("arity error: " + msg) {}
};

// Bad harness or CLI configuration (unknown keys, empty method list, ...).
struct ConfigError : Error {
    explicit ConfigError(const std::string &msg) : Error("config error: " + msg) {}
};

// Corpus record or serialized object fails a structural invariant.
struct FormatError : Error {
    explicit FormatError(const std::string &msg) : Error("format error: " + msg) {}
};

} // namespace rpgd
