#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace condseg {

enum class ErrorCode {
    DegenerateEllipse,
    NonPositiveNormalizer,
    EmptyCondition,
    ShapeMismatch,
    TooFewPixels,
    RoIOutOfBounds,
    RejectionBudgetExceeded,
    EmptyMask,
    InsufficientPoints,
    DegenerateConfiguration,
    NoConsensus,
    LengthMismatch,
    InvalidArgument,
    Io,
    Format,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DegenerateEllipse: return "DegenerateEllipse";
        case ErrorCode::NonPositiveNormalizer: return "NonPositiveNormalizer";
        case ErrorCode::EmptyCondition: return "EmptyCondition";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::TooFewPixels: return "TooFewPixels";
        case ErrorCode::RoIOutOfBounds: return "RoIOutOfBounds";
        case ErrorCode::RejectionBudgetExceeded: return "RejectionBudgetExceeded";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::InsufficientPoints: return "InsufficientPoints";
        case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
        case ErrorCode::NoConsensus: return "NoConsensus";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Format: return "Format";
    }
    return "Unknown";
}

/// Single exception type for the library; `code()` carries the failure class.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace condseg
