#pragma once

#include <stdexcept>
#include <string>

namespace offrl {

/// Failure classes. The CLI maps each one to its own exit code.
enum class ErrorKind { Config, Data, Numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, "config error: " + w) {}
};

struct DataError : Error {
    explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};

struct SchemaError : DataError {
    explicit SchemaError(const std::string& w) : DataError("schema error: " + w) {}
};

struct MalformedEpisodeError : DataError {
    explicit MalformedEpisodeError(const std::string& w) : DataError("malformed episode: " + w) {}
};

struct ParseError : DataError {
    explicit ParseError(const std::string& w) : DataError("parse error: " + w) {}
};

struct InsufficientDataError : DataError {
    explicit InsufficientDataError(const std::string& w) : DataError("insufficient data: " + w) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& w) : Error(ErrorKind::Numerical, "numerical error: " + w) {}
};

inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numerical: return 4;
    }
    return 1;
}

#define OFFRL_REQUIRE(cond, ExceptionType, msg) \
    do {                                        \
        if (!(cond)) throw ExceptionType(msg);  \
    } while (0)

}  // namespace offrl
