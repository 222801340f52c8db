#pragma once

#include <stdexcept>
#include <string>

namespace ricemap {

// Bad user input: unreadable files, malformed documents, contract violations
// on operation arguments. CLI maps this to exit code 2.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failures. Also exit code 2 at the CLI.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A broken internal invariant. CLI maps this to exit code 3.
class internal_error : public std::logic_error {
public:
    explicit internal_error(const std::string& msg) : std::logic_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw validation_error(msg);
}

inline void ensure(bool cond, const std::string& msg) {
    if (!cond) throw internal_error(msg);
}

} // namespace ricemap
