#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace celeganser {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kDegenerateGeometry,
  kEmptyMask,
  kInfeasibleParams,
  kAmbiguousOrientation,
  kWormNotFound,
  kBadMagic,
  kCorruptFile,
  kIo,
  kNonFinite,
  kConfig,
  kMissingCheckpoint,
};

// Stable identifier used in machine-parseable CLI error lines.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace celeganser
