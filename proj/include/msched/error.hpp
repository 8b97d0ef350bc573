#pragma once

#include <stdexcept>
#include <string>

namespace msched {

/// Coarse error category, mirrored one-to-one by the C API status codes.
enum class Errc {
    invalid_argument,
    io,
    parse,
    config,
    state,
    runtime,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) { throw Error(code, what); }

} // namespace msched
