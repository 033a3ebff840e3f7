#pragma once

#include <stdexcept>
#include <string>

namespace fatlab {

enum class ErrCode {
    Ok = 0,
    Input = 1,    // bad arguments, shape mismatch, unknown keys
    Format = 2,   // malformed file contents
    Numeric = 3,  // NaN/Inf escaped a computation
    Io = 4,       // filesystem failures
};

class Error : public std::runtime_error {
public:
    Error(ErrCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrCode code() const { return code_; }

private:
    ErrCode code_;
};

[[noreturn]] inline void throw_input(const std::string& msg) { throw Error(ErrCode::Input, msg); }
[[noreturn]] inline void throw_format(const std::string& msg) { throw Error(ErrCode::Format, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrCode::Numeric, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrCode::Io, msg); }

}  // namespace fatlab
