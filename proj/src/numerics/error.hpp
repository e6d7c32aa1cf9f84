#pragma once

#include <stdexcept>
#include <string>

namespace rohil {

// Mirrors the status codes exposed through the C API.
enum class ErrorCode {
  kInvalidArgument = 1,
  kShapeMismatch,
  kNonFinite,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kMissingEntry,
  kEmptyPool,
  kIo,
  kConfig,
  kMissingState,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kMissingEntry: return "missing entry";
    case ErrorCode::kEmptyPool: return "empty pool";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kMissingState: return "missing world state";
  }
  return "unknown";
}

}  // namespace rohil
