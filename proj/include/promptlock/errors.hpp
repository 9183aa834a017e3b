#pragma once

#include <stdexcept>
#include <string>

namespace promptlock {

enum class ErrorCode {
  InvalidConfig,
  EmptyText,
  EmptyAlphabet,
  LengthMismatch,
  EmptyLabels,
  MissingReference,
  MissingChoices,
  InvalidArtifact,
  TransportError,
  ProviderRefusal,
  LogprobsUnsupported,
  EmptyResponse,
  MissingBinding,
  UnknownPlaceholder,
  InvalidTemplate,
  DatasetEmpty,
  CorruptCheckpoint,
  ConfigMismatch,
  CorruptTrace,
  ShapeMismatch,
  ZeroBaseline,
  KeyMismatch,
  IoError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::EmptyAlphabet: return "EmptyAlphabet";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyLabels: return "EmptyLabels";
    case ErrorCode::MissingReference: return "MissingReference";
    case ErrorCode::MissingChoices: return "MissingChoices";
    case ErrorCode::InvalidArtifact: return "InvalidArtifact";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ProviderRefusal: return "ProviderRefusal";
    case ErrorCode::LogprobsUnsupported: return "LogprobsUnsupported";
    case ErrorCode::EmptyResponse: return "EmptyResponse";
    case ErrorCode::MissingBinding: return "MissingBinding";
    case ErrorCode::UnknownPlaceholder: return "UnknownPlaceholder";
    case ErrorCode::InvalidTemplate: return "InvalidTemplate";
    case ErrorCode::DatasetEmpty: return "DatasetEmpty";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::CorruptTrace: return "CorruptTrace";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Domain error carrying a machine-readable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace promptlock
