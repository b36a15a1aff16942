#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prodehaze {

enum class ErrorCode {
  kMissingFile,
  kUnsupportedFormat,
  kCorruptHeader,
  kCorruptPayload,
  kUnwritablePath,
  kShapeMismatch,
  kInvalidArgument,
  kOutOfRange,
  kMissingCheckpoint,
  kEmptyDataset,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported as this exception; `code()` lets callers
// (and the CLI error JSON) distinguish failure classes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const char* message) {
  if (!condition) fail(code, message);
}

}  // namespace prodehaze
