#pragma once

#include <stdexcept>
#include <string>

namespace flgcn {

enum class errc {
    invalid_spec,
    format,
    data,
    sampling,
    invalid_selection,
    budget,
    undefined_classifier,
    config,
    shape,
    no_candidates,
    unsupported,
    training,
};

class error : public std::runtime_error {
public:
    error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    errc code() const noexcept { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw error(code, msg); }

} // namespace flgcn
