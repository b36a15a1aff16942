#include "prodehaze/error.hpp"

namespace prodehaze {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "missing_file";
    case ErrorCode::kUnsupportedFormat: return "unsupported_format";
    case ErrorCode::kCorruptHeader: return "corrupt_header";
    case ErrorCode::kCorruptPayload: return "corrupt_payload";
    case ErrorCode::kUnwritablePath: return "unwritable_path";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kMissingCheckpoint: return "missing_checkpoint";
    case ErrorCode::kEmptyDataset: return "empty_dataset";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace prodehaze
