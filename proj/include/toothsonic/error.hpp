#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace toothsonic {

enum class ErrorCode {
  EmptyInput,
  InvalidBand,
  TooShort,
  InvalidInput,
  InvalidLabel,
  InvalidDataset,
  InvalidGesture,
  UnknownSubject,
  InvalidProtocol,
  EmptyProtocol,
  InvalidConfig,
  FormatError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::InvalidDataset: return "InvalidDataset";
    case ErrorCode::InvalidGesture: return "InvalidGesture";
    case ErrorCode::UnknownSubject: return "UnknownSubject";
    case ErrorCode::InvalidProtocol: return "InvalidProtocol";
    case ErrorCode::EmptyProtocol: return "EmptyProtocol";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace toothsonic
