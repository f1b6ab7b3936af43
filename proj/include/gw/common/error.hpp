#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gw {

// Caller broke a documented precondition (shape mismatch, empty batch, ...).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Invalid or inconsistent user configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite value produced during a forward pass.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::size_t node)
        : std::runtime_error(what + " (node " + std::to_string(node) + ")"), node_(node) {}
    std::size_t node() const noexcept { return node_; }

private:
    std::size_t node_;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public std::runtime_error {
public:
    IoError(const std::string& what, std::string path)
        : std::runtime_error(what + ": " + path), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

inline void require(bool cond, const char* msg) {
    if (!cond) throw ContractViolation(msg);
}

inline void require_config(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

}  // namespace gw
