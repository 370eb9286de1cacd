#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace concord {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text. `line` is 1-based; 0 when no line applies.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Well-formed input that violates a domain rule (e.g. negative uncertainty).
class ValidationError : public Error {
public:
    using Error::Error;
};

// A fit could not be attempted (e.g. too few usable bins).
class FitError : public Error {
public:
    using Error::Error;
};

// Bad configuration key or value supplied by the user.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace concord
