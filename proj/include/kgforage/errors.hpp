#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgforage {

// Root of every error the engine throws. Callers that only need a message
// can catch this; the service maps concrete subclasses to HTTP statuses.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- graph_store ------------------------------------------------------------

class FixtureParseError : public Error {
public:
    FixtureParseError(std::size_t line, const std::string& reason)
        : Error("fixture line " + std::to_string(line) + ": " + reason), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ReferenceError : public Error {
public:
    ReferenceError(std::size_t line, const std::string& reason)
        : Error("fixture line " + std::to_string(line) + ": " + reason), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class UnknownEntity : public Error {
public:
    explicit UnknownEntity(const std::string& id) : Error("unknown entity: " + id), id_(id) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class SparqlParseError : public Error {
public:
    SparqlParseError(std::size_t offset, const std::string& reason)
        : Error("SPARQL parse error at offset " + std::to_string(offset) + ": " + reason),
          offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class UnsupportedSyntax : public Error {
public:
    explicit UnsupportedSyntax(const std::string& token)
        : Error("unsupported SPARQL syntax: " + token), token_(token) {}
    const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

// ---- kg_client --------------------------------------------------------------

class BackendUnavailable : public Error {
public:
    explicit BackendUnavailable(const std::string& reason, std::optional<std::size_t> chunk = {})
        : Error(chunk ? "backend unavailable (chunk " + std::to_string(*chunk) + "): " + reason
                      : "backend unavailable: " + reason),
          reason_(reason), chunk_(chunk) {}
    const std::string& reason() const noexcept { return reason_; }
    // 1-based ordinal of the failing chunk when raised from a batched query.
    std::optional<std::size_t> chunk() const noexcept { return chunk_; }

private:
    std::string reason_;
    std::optional<std::size_t> chunk_;
};

class QueryRejected : public Error {
public:
    explicit QueryRejected(const std::string& message, std::optional<std::size_t> chunk = {})
        : Error("query rejected: " + message), message_(message), chunk_(chunk) {}
    const std::string& message() const noexcept { return message_; }
    std::optional<std::size_t> chunk() const noexcept { return chunk_; }

private:
    std::string message_;
    std::optional<std::size_t> chunk_;
};

class EmptyCell : public Error {
public:
    EmptyCell() : Error("cell text is empty") {}
};

// ---- tabular ----------------------------------------------------------------

class CsvError : public Error {
public:
    CsvError(std::size_t row, const std::string& reason)
        : Error("CSV row " + std::to_string(row) + ": " + reason), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class RaggedRows : public CsvError {
public:
    RaggedRows(std::size_t row, std::size_t expected, std::size_t got)
        : CsvError(row, "expected " + std::to_string(expected) + " fields, got " +
                            std::to_string(got)) {}
};

class LengthMismatch : public Error {
public:
    LengthMismatch(std::size_t expected, std::size_t got)
        : Error("expected " + std::to_string(expected) + " values, got " + std::to_string(got)) {}
};

class UnknownColumn : public Error {
public:
    explicit UnknownColumn(const std::string& name) : Error("unknown column: " + name) {}
};

// ---- discovery --------------------------------------------------------------

class NotAStringColumn : public Error {
public:
    explicit NotAStringColumn(const std::string& name)
        : Error("column is not string-typed: " + name) {}
};

class AllCellsUnresolved : public Error {
public:
    AllCellsUnresolved() : Error("no sampled cell resolved to an entity") {}
};

class EmptySample : public Error {
public:
    EmptySample() : Error("distribution sample is empty") {}
};

class BadCounts : public Error {
public:
    BadCounts(long long hits, long long n)
        : Error("bad counts: hits=" + std::to_string(hits) + " n=" + std::to_string(n)) {}
};

// ---- planner / query_gen ----------------------------------------------------

struct PlanError {
    // -1 for plan-level problems (empty hop list, missing output name, depth).
    int hop_index = -1;
    std::string reason;

    friend bool operator==(const PlanError&, const PlanError&) = default;
};

class InvalidPlan : public Error {
public:
    explicit InvalidPlan(std::vector<PlanError> errors)
        : Error(summarize(errors)), errors_(std::move(errors)) {}
    const std::vector<PlanError>& errors() const noexcept { return errors_; }

private:
    static std::string summarize(const std::vector<PlanError>& errors) {
        std::string out = "invalid plan";
        for (const auto& e : errors) {
            out += "; hop " + std::to_string(e.hop_index) + ": " + e.reason;
        }
        return out;
    }
    std::vector<PlanError> errors_;
};

class EmptyEntitySet : public Error {
public:
    EmptyEntitySet() : Error("entity set is empty") {}
};

// ---- materializer -----------------------------------------------------------

class IllegalOp : public Error {
public:
    using Error::Error;
};

class MultiplicityViolation : public Error {
public:
    explicit MultiplicityViolation(std::size_t n)
        : Error("'value' aggregation expects one element, got " + std::to_string(n)) {}
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class RowUnresolvable : public Error {
public:
    explicit RowUnresolvable(std::size_t row)
        : Error("row " + std::to_string(row) + " does not resolve to an entity") {}
};

}  // namespace kgforage
