#pragma once

#include <stdexcept>
#include <string>

namespace florg {

// Shape/domain violations at an operation boundary. These indicate caller
// bugs, not data conditions, so they carry the offending shapes in the text.
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A symmetric matrix handed to the PSD eigensolver had an eigenvalue more
// negative than the caller's tolerance.
class NotPsdError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values appeared during optimisation. round/client are -1 when
// the failure happened outside the federated loop.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what, int round = -1, int client = -1)
        : std::runtime_error(what), round_(round), client_(client) {}
    int round() const { return round_; }
    int client() const { return client_; }

private:
    int round_;
    int client_;
};

// Config file problems: unknown key, bad value, unreadable file. line is
// 1-based, 0 when the error is not tied to a specific line.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what, int line = 0)
        : std::runtime_error(what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace florg
