#pragma once

#include <exception>
#include <string>
#include <utility>

namespace prompttree {

// Error categories map onto CLI exit codes: configuration, data and backend
// failures exit with 2, a cache-only miss exits with 3.
class Error : public std::exception {
public:
    explicit Error(std::string message) : message_(std::move(message)) {}

    const char* what() const noexcept override { return message_.c_str(); }

    // Prepends caller context, e.g. the tree-node path a provider failure
    // surfaced from. Callers catch by reference, add context and rethrow so
    // the dynamic type is preserved.
    void add_context(const std::string& context) {
        message_ = context + ": " + message_;
    }

private:
    std::string message_;
};

// Bad run configuration, missing files, malformed prompt/rule files.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or contradictory data: datasets, feature cells, serialized models.
class DataError : public Error {
public:
    using Error::Error;
};

// Transport or protocol failure talking to an LM backend.
class BackendError : public Error {
public:
    explicit BackendError(std::string message, int status = 0)
        : Error(std::move(message)), status_(status) {}

    int status() const { return status_; }

private:
    int status_ = 0;
};

// The backend cannot serve the requested operation (e.g. no text generation).
class CapabilityError : public Error {
public:
    using Error::Error;
};

// Degraded mode: a candidate token is not a single continuation token for the
// remote tokenizer, so its probability cannot be scored exactly.
class TokenizationError : public Error {
public:
    TokenizationError(std::string message, std::string token)
        : Error(std::move(message)), token_(std::move(token)) {}

    const std::string& token() const { return token_; }

private:
    std::string token_;
};

// Raised in cache-only evaluation when a feature cell is absent.
class CacheMissError : public Error {
public:
    using Error::Error;
};

}  // namespace prompttree
