// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/error.hpp"

namespace welore {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kRange: return "range";
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kShapeInconsistent: return "shape_inconsistent";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kPlanMismatch: return "plan_mismatch";
    case ErrorCode::kUnreachable: return "unreachable";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kDegenerate: return "degenerate";
  }
  return "unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kRange:
      return 2;
    case ErrorCode::kUnreachable:
    case ErrorCode::kNumerical:
    case ErrorCode::kNonFinite:
      return 4;
    default:
      return 3;
  }
}

}  // namespace welore
