// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/error.hpp"

namespace ftsmoe {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::UnparseableDate: return "UnparseableDate";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::DuplicateDate: return "DuplicateDate";
        case ErrorCode::WidthMismatch: return "WidthMismatch";
        case ErrorCode::MalformedLine: return "MalformedLine";
        case ErrorCode::DateIndexMismatch: return "DateIndexMismatch";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::SeriesTooShort: return "SeriesTooShort";
        case ErrorCode::NonPositivePrice: return "NonPositivePrice";
        case ErrorCode::TooFewReturns: return "TooFewReturns";
        case ErrorCode::ZeroVolatility: return "ZeroVolatility";
        case ErrorCode::DateMismatch: return "DateMismatch";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::OddHeadWidth: return "OddHeadWidth";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::EmptyStats: return "EmptyStats";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::Usage: return "Usage";
    }
    return "Unknown";
}

int exit_code_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Usage:
        case ErrorCode::InvalidConfig:
            return 2;
        case ErrorCode::OddHeadWidth:
        case ErrorCode::ShapeMismatch:
        case ErrorCode::IndexOutOfRange:
        case ErrorCode::EmptyStats:
        case ErrorCode::NonFiniteGradient:
        case ErrorCode::CorruptCheckpoint:
        case ErrorCode::VersionMismatch:
            return 4;
        default:
            return 3;
    }
}

}  // namespace ftsmoe
