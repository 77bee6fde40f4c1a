#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coreset {

enum class ErrorKind {
  ZeroNorm,
  NonFinite,
  DimensionMismatch,
  EmptyGroup,
  DegenerateCenter,
  FormatError,
  NormError,
  DuplicateIdentity,
  InvalidDataset,
  FingerprintMismatch,
  UnknownIdentity,
  UnknownFaceIndex,
  InvalidManifest,
  GroupTooLarge,
  MissingScore,
  MalformedScoreFile,
  ConfigError,
  MissingIdentity,
  InsufficientPairs,
  IoError,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ZeroNorm: return "ZeroNorm";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::DegenerateCenter: return "DegenerateCenter";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::NormError: return "NormError";
    case ErrorKind::DuplicateIdentity: return "DuplicateIdentity";
    case ErrorKind::InvalidDataset: return "InvalidDataset";
    case ErrorKind::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorKind::UnknownIdentity: return "UnknownIdentity";
    case ErrorKind::UnknownFaceIndex: return "UnknownFaceIndex";
    case ErrorKind::InvalidManifest: return "InvalidManifest";
    case ErrorKind::GroupTooLarge: return "GroupTooLarge";
    case ErrorKind::MissingScore: return "MissingScore";
    case ErrorKind::MalformedScoreFile: return "MalformedScoreFile";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::MissingIdentity: return "MissingIdentity";
    case ErrorKind::InsufficientPairs: return "InsufficientPairs";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a kind so the CLI can map it
/// onto an exit code and tests can assert on the category.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

} // namespace coreset
