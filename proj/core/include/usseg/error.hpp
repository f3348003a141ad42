#pragma once

#include <stdexcept>
#include <string>

namespace usseg {

// File or wire format violation (bad magic, truncated payload, dim mismatch).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration value; message names the offending key path.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace usseg
