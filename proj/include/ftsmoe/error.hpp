// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ftsmoe {

enum class ErrorCode {
    // data
    MissingColumn,
    UnparseableDate,
    NonFiniteValue,
    DuplicateDate,
    WidthMismatch,
    MalformedLine,
    DateIndexMismatch,
    LengthMismatch,
    EmptyInput,
    SeriesTooShort,
    NonPositivePrice,
    TooFewReturns,
    ZeroVolatility,
    DateMismatch,
    IoError,
    // model
    OddHeadWidth,
    ShapeMismatch,
    IndexOutOfRange,
    EmptyStats,
    NonFiniteGradient,
    CorruptCheckpoint,
    VersionMismatch,
    // configuration / invocation
    InvalidConfig,
    Usage,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Process exit code for a failure of the given kind: 2 usage, 3 data, 4 model.
int exit_code_for(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string context = {})
        : std::runtime_error(message), code_(code), context_(std::move(context)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& context() const noexcept { return context_; }

private:
    ErrorCode code_;
    std::string context_;
};

}  // namespace ftsmoe
