#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace decomesh {

/// Stable error codes surfaced by the CLI (stderr JSON) and the HTTP service.
enum class ErrorCode {
  kInvalidArgument,
  kParseError,
  kIoError,
  kNonTriangleFace,
  kIndexOutOfRange,
  kDegenerateFace,
  kCountMismatch,
  kBadMagic,
  kDimMismatch,
  kEmptySet,
  kDegenerateRay,
  kMissedPixel,
  kEmptySeed,
  kMissingFeatures,
  kNoWallRays,
  kZeroArea,
  kNotFound,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kParseError: return "parse_error";
    case ErrorCode::kIoError: return "io_error";
    case ErrorCode::kNonTriangleFace: return "non_triangle_face";
    case ErrorCode::kIndexOutOfRange: return "index_out_of_range";
    case ErrorCode::kDegenerateFace: return "degenerate_face";
    case ErrorCode::kCountMismatch: return "count_mismatch";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kDimMismatch: return "dim_mismatch";
    case ErrorCode::kEmptySet: return "empty_set";
    case ErrorCode::kDegenerateRay: return "degenerate_ray";
    case ErrorCode::kMissedPixel: return "missed_pixel";
    case ErrorCode::kEmptySeed: return "empty_seed";
    case ErrorCode::kMissingFeatures: return "missing_features";
    case ErrorCode::kNoWallRays: return "no_wall_rays";
    case ErrorCode::kZeroArea: return "zero_area";
    case ErrorCode::kNotFound: return "not_found";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace decomesh
