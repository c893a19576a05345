#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace apl {

enum class ErrorCode {
  format,
  unsupported,
  corrupt,
  io,
  write,
  bounds,
  geometry,
  parameter,
  empty_mask,
  ambiguous_labels,
  segmentation_failed,
  malformed_rle,
  undefined_score,
  pairing,
  degenerate_variance,
  undefined_correlation,
  domain,
  spec,
  not_found,
  conflict,
  validation,
};

/// Stable snake_case name, used in CLI diagnostics and service error documents.
std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace apl
