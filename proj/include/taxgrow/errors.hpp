#pragma once

#include <stdexcept>
#include <string>

namespace taxgrow {

// Bad or missing configuration (unknown flag value, absent input path).
// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable or inconsistent input data (corpus, embeddings, taxonomy files).
// The CLI maps this to exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace taxgrow
