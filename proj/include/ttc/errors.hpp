#pragma once
#include <stdexcept>
#include <string>

namespace ttc {

// Base for every error the library raises on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Violated precondition or interface misuse by the caller.
struct ContractError : Error {
    explicit ContractError(const std::string& what) : Error(what) {}
};

// Bad configuration (missing scenario, conflicting endpoint settings, ...).
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(what) {}
};

// Network-level failure talking to a remote endpoint. Retryable.
struct TransportError : Error {
    explicit TransportError(const std::string& what) : Error(what) {}
};

// The remote answered but the payload is unusable. Not retryable.
struct ProtocolError : Error {
    explicit ProtocolError(const std::string& what) : Error(what) {}
};

// Malformed input text (diff syntax, scenario line, fixture schema).
struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error(what) {}
};

// Sandbox / fixture environment cannot be set up or used.
struct EnvironmentError : Error {
    explicit EnvironmentError(const std::string& what) : Error(what) {}
};

} // namespace ttc
