#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace clarify {

// Operation invoked in a session state that does not permit it.
class StateViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Mathematically undefined input (zero vector, zero tokens, constant ranks).
class UndefinedInput : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Malformed record file. line() is 1-based; 0 when not tied to a line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DuplicateIdError : public std::runtime_error {
public:
    DuplicateIdError(std::string id, std::size_t first_line, std::size_t second_line)
        : std::runtime_error("duplicate id '" + id + "' on lines " + std::to_string(first_line) +
                             " and " + std::to_string(second_line)),
          id_(std::move(id)),
          first_line_(first_line),
          second_line_(second_line) {}

    const std::string& id() const noexcept { return id_; }
    std::size_t first_line() const noexcept { return first_line_; }
    std::size_t second_line() const noexcept { return second_line_; }

private:
    std::string id_;
    std::size_t first_line_;
    std::size_t second_line_;
};

enum class ProviderErrorKind {
    Auth,            // credentials rejected
    RateLimit,       // backend asked us to slow down
    Transport,       // connection failure, timeout, 5xx
    Malformed,       // response could not be interpreted
    InvalidRequest,  // backend rejected the request (4xx other than auth/rate)
    ScriptMiss,      // mock script has no entry for the request
};

const char* to_string(ProviderErrorKind kind);

class ProviderError : public std::runtime_error {
public:
    ProviderError(ProviderErrorKind kind, const std::string& what, std::string raw = {})
        : std::runtime_error(what), kind_(kind), raw_(std::move(raw)) {}

    ProviderErrorKind kind() const noexcept { return kind_; }
    // Raw backend payload, kept for malformed responses.
    const std::string& raw() const noexcept { return raw_; }

    bool retriable() const noexcept {
        return kind_ == ProviderErrorKind::RateLimit || kind_ == ProviderErrorKind::Transport;
    }

private:
    ProviderErrorKind kind_;
    std::string raw_;
};

}  // namespace clarify
