#pragma once
#include <stdexcept>
#include <string>
#include <string_view>

namespace radiant {

enum class ErrorCode {
    MagicMismatch,
    HeaderParse,
    SizeMismatch,
    NonFiniteValue,
    IoFailure,
    InvariantViolation,
    IndexOutOfRange,
    EmptyClass,
    Diverged,
    GeometryMismatch,
    EmptySelection,
    NotSymmetric,
    IndefiniteBeyondTolerance,
    DimensionMismatch,
    DegenerateNormal,
    NumericalFailure,
    NotOptimal,
    SingularCovariance,
    NoViableLayer,
    VersionUnsupported,
    ChecksumMismatch,
    BadSpec,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so that
/// callers (notably the CLI) can map it onto a structured report.
class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace radiant
