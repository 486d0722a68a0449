#pragma once

#include <stdexcept>
#include <string>

namespace statefuse {

enum class ErrorKind {
  kInvalidParameter,
  kNumericOverflow,
  kBehindCamera,
  kInvalidDepth,
  kInvalidCamera,
  kInvalidPose,
  kEmptySequence,
  kInvalidConfig,
  kInvalidInput,
  kIo,
};

const char* to_string(ErrorKind kind);

/// Library-wide exception. Every failure carries a kind so callers (the CLI
/// in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidParameter: return "invalid-parameter";
    case ErrorKind::kNumericOverflow: return "numeric-overflow";
    case ErrorKind::kBehindCamera: return "behind-camera";
    case ErrorKind::kInvalidDepth: return "invalid-depth";
    case ErrorKind::kInvalidCamera: return "invalid-camera";
    case ErrorKind::kInvalidPose: return "invalid-pose";
    case ErrorKind::kEmptySequence: return "empty-sequence";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

}  // namespace statefuse
