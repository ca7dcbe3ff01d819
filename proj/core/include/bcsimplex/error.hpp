#pragma once

#include <stdexcept>
#include <string>

namespace bcsimplex {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input that violates a documented contract (bad model, bad bounds, bad flags).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Model-file syntax or semantic error carrying a 1-based source position.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, int line, int column)
        : ValidationError(format(what, line, column)), message_(what), line_(line), column_(column)
    {
    }

    /// The message without the position prefix.
    [[nodiscard]] const std::string& message() const { return message_; }
    [[nodiscard]] int line() const { return line_; }
    [[nodiscard]] int column() const { return column_; }

private:
    static std::string format(const std::string& what, int line, int column)
    {
        return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what;
    }

    std::string message_;
    int line_;
    int column_;
};

/// Integration produced a non-finite state.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Wire-protocol or socket failure with an external controller.
class TransportError : public Error {
public:
    using Error::Error;
};

} // namespace bcsimplex
