#include "apl/error.hpp"

namespace apl {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::format: return "format";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::corrupt: return "corrupt";
    case ErrorCode::io: return "io";
    case ErrorCode::write: return "write";
    case ErrorCode::bounds: return "bounds";
    case ErrorCode::geometry: return "geometry";
    case ErrorCode::parameter: return "parameter";
    case ErrorCode::empty_mask: return "empty_mask";
    case ErrorCode::ambiguous_labels: return "ambiguous_labels";
    case ErrorCode::segmentation_failed: return "segmentation_failed";
    case ErrorCode::malformed_rle: return "malformed_rle";
    case ErrorCode::undefined_score: return "undefined_score";
    case ErrorCode::pairing: return "pairing";
    case ErrorCode::degenerate_variance: return "degenerate_variance";
    case ErrorCode::undefined_correlation: return "undefined_correlation";
    case ErrorCode::domain: return "domain";
    case ErrorCode::spec: return "spec";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::validation: return "validation";
  }
  return "unknown";
}

}  // namespace apl
