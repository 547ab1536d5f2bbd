#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ppgbp {

enum class ErrorCode {
  // dataset
  MissingFile,
  MalformedRow,
  InvalidBp,
  WrongLength,
  NonNumericToken,
  TooFewSubjects,
  // preprocess
  EvenKernel,
  KernelTooLarge,
  InvalidSpec,
  SignalTooShort,
  TooShort,
  ZeroVariance,
  // spectral
  InvalidLength,
  TooFewSamples,
  NoConvergence,
  RankDeficient,
  // nn
  KernelExceedsInput,
  ShapeMismatch,
  BatchTooSmall,
  WindowTooLarge,
  EmptySequence,
  DegenerateLabels,
  // classifiers / ensemble
  EmptyTrainingSet,
  FoldDegenerate,
  // metrics
  LengthMismatch,
  Empty,
  // runner
  IoError,
  ConfigError,
  Leakage,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::InvalidBp: return "InvalidBp";
    case ErrorCode::WrongLength: return "WrongLength";
    case ErrorCode::NonNumericToken: return "NonNumericToken";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::EvenKernel: return "EvenKernel";
    case ErrorCode::KernelTooLarge: return "KernelTooLarge";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::InvalidLength: return "InvalidLength";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::KernelExceedsInput: return "KernelExceedsInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::FoldDegenerate: return "FoldDegenerate";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Leakage: return "Leakage";
  }
  return "Unknown";
}

/// Every failure raised by the library. `detail` carries the numeric payload
/// some codes have (line number for MalformedRow, sample count for
/// WrongLength, iteration cap for NoConvergence).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::int64_t> detail = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::int64_t> detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::optional<std::int64_t> detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message,
                              std::optional<std::int64_t> detail = std::nullopt) {
  throw Error(code, message, detail);
}

}  // namespace ppgbp
