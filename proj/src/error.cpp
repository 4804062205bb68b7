#include <radiant/error.hpp>

namespace radiant {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::HeaderParse: return "HeaderParse";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::IndefiniteBeyondTolerance: return "IndefiniteBeyondTolerance";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateNormal: return "DegenerateNormal";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::NotOptimal: return "NotOptimal";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::NoViableLayer: return "NoViableLayer";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::BadSpec: return "BadSpec";
    }
    return "Unknown";
}

} // namespace radiant
