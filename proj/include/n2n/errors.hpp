#pragma once

#include <stdexcept>
#include <string>

namespace n2n {

// Invalid configuration or bad argument values. CLI exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller violated an operation precondition. CLI exit code 2.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file. Carries position information. CLI exit code 2.
struct ParseError : std::runtime_error {
    std::string path;
    long line = -1;     // 1-based, -1 if unknown
    long byte = -1;     // 0-based byte offset, -1 if unknown
    ParseError(std::string path_, long line_, long byte_, const std::string& msg)
        : std::runtime_error(path_ + (line_ >= 0 ? ":" + std::to_string(line_) : "") + ": " + msg),
          path(std::move(path_)),
          line(line_),
          byte(byte_) {}
};

// Non-finite value encountered during numeric work. CLI exit code 3.
struct NumericError : std::runtime_error {
    long node = -1;  // offending tape node, -1 if not tape-related
    NumericError(const std::string& msg, long node_ = -1)
        : std::runtime_error(msg + (node_ >= 0 ? " (node " + std::to_string(node_) + ")" : "")),
          node(node_) {}
};

// Malformed tape: cycles, bad roots, unseeded leaves.
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace n2n
