#pragma once

#include <stdexcept>
#include <string>

namespace synthpipe {

// Bad input, schema violation, broken precondition. CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem or wire failure. CLI exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Transient transport failure between orchestrator and backend; retryable.
class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace synthpipe
