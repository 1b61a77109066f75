#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace udm {

enum class ErrorCode {
    InvalidArgument,
    MissingColumn,
    NonUniformSampling,
    NonFiniteValue,
    EmptyFile,
    EmptyDataset,
    ChannelCountMismatch,
    ChannelMismatch,
    InsufficientData,
    LagShortfall,
    SingularNormalEquations,
    NonFiniteUpdate,
    DimensionMismatch,
    UnstableTruth,
    VoltageCollapse,
    InsufficientHistory,
    FitFailed,
    OutOfOrderSample,
    LengthMismatch,
    EmptySuite,
    Io,
    Config,
};

std::string_view to_string(ErrorCode code) noexcept;

// All library failures are reported through this type; the code is stable
// across the C boundary, the message names the offending column/row/field.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonUniformSampling: return "NonUniformSampling";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::ChannelCountMismatch: return "ChannelCountMismatch";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::LagShortfall: return "LagShortfall";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::NonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnstableTruth: return "UnstableTruth";
    case ErrorCode::VoltageCollapse: return "VoltageCollapse";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::FitFailed: return "FitFailed";
    case ErrorCode::OutOfOrderSample: return "OutOfOrderSample";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptySuite: return "EmptySuite";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

} // namespace udm
