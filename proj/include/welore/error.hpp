// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace welore {

enum class ErrorCode {
  kInvalidArgument,    // bad caller input (usage)
  kRange,              // rank or index out of range
  kDimension,          // shape mismatch
  kNonFinite,          // NaN/Inf in numeric input
  kBadMagic,           // checkpoint magic mismatch
  kVersionMismatch,    // checkpoint version mismatch
  kTruncated,          // checkpoint shorter than its metadata implies
  kShapeInconsistent,  // checkpoint metadata / payload inconsistent
  kFormat,             // other parse / IO failure
  kPlanMismatch,       // rank plan does not match model layers
  kUnreachable,        // target ERR not reachable on the threshold grid
  kNumerical,          // divergence, singular matrix
  kDegenerate,         // statistic undefined on all-zero input
};

std::string_view to_string(ErrorCode code);

// Exit code family used by the CLI: 2 usage, 3 data/format, 4 numerical.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace welore
