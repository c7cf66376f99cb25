#ifndef CNCREG_ERRORS_HPP
#define CNCREG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cncreg {

// Violated precondition or invariant on a public entry point.
class ValueError : public std::runtime_error {
public:
    explicit ValueError(const std::string& what) : std::runtime_error(what) {}
};

// File and serialization failures. The code lets callers react to the
// specific defect without parsing the message.
class IoError : public std::runtime_error {
public:
    enum class Code {
        OpenFailed,
        WriteFailed,
        BadMagic,
        UnsupportedVersion,
        UnsupportedDtype,
        Truncated,
        DimsOverflow,
        NonFiniteData,
    };

    IoError(Code c, const std::string& what) : std::runtime_error(what), code(c) {}

    Code code;
};

} // namespace cncreg

#endif
