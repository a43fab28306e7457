#pragma once

#include <stdexcept>
#include <string>

namespace uqbench {

enum class ErrorKind {
    invalid_input,       // malformed files, bad parameters, schema violations
    io,                  // unreadable or unwritable paths
    shape_mismatch,      // tensor shapes disagree with a model's input contract
    out_of_range,        // class index or k outside the label space
    weights_unavailable, // requested weights cannot be located or loaded
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

} // namespace uqbench
