#include "celeganser/error.hpp"

namespace celeganser {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kDegenerateGeometry: return "degenerate_geometry";
    case ErrorCode::kEmptyMask: return "empty_mask";
    case ErrorCode::kInfeasibleParams: return "infeasible_params";
    case ErrorCode::kAmbiguousOrientation: return "ambiguous_orientation";
    case ErrorCode::kWormNotFound: return "worm_not_found";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kCorruptFile: return "corrupt_file";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kMissingCheckpoint: return "missing_checkpoint";
  }
  return "unknown";
}

}  // namespace celeganser
