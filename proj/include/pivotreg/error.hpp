#pragma once

#include <exception>
#include <stdexcept>
#include <string>

namespace pivotreg {

// Every failure raised by the library derives from Error. The concrete type
// tells the caller which stage contract was violated; the CLI maps them onto
// exit codes and the service onto HTTP status codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error { using Error::Error; };
class NotFoundError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class SizeError : public Error { using Error::Error; };
class AlignmentError : public Error { using Error::Error; };
class DegenerateColumnError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class SamplerStuckError : public Error { using Error::Error; };
class TimeoutError : public Error { using Error::Error; };

class TransportError : public Error {
public:
    TransportError(const std::string& what, int status)
        : Error(what), status_(status) {}
    // HTTP status, or 0 when no response was received at all.
    int status() const noexcept { return status_; }

private:
    int status_;
};

// Wraps a downstream error with the pipeline stage it came from.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause, std::exception_ptr cause_ptr = nullptr)
        : Error(stage + ": " + cause.what()), stage_(std::move(stage)), cause_(std::move(cause_ptr)) {}
    const std::string& stage() const noexcept { return stage_; }

    template <typename T>
    bool cause_is() const {
        if (!cause_) return false;
        try {
            std::rethrow_exception(cause_);
        } catch (const T&) {
            return true;
        } catch (...) {
            return false;
        }
    }

private:
    std::string stage_;
    std::exception_ptr cause_;
};

}  // namespace pivotreg
