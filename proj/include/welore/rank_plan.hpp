// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "welore/spectrum.hpp"

namespace welore {

enum class LayerClass { kUnlabeled, kLRC, kNLRC };

std::string_view to_string(LayerClass c);
LayerClass layer_class_from_string(std::string_view s);

struct PlanEntry {
  std::string layer;
  std::size_t full_rank = 0;
  std::size_t rank = 0;
  LayerClass cls = LayerClass::kUnlabeled;

  bool operator==(const PlanEntry&) const = default;
};

/// Global threshold, per-layer retained ranks and LRC/N-LRC labels.
struct RankPlan {
  double threshold_k = 0.0;
  double target_err = 0.0;
  double achieved_err = 0.0;
  double tolerance = 0.0;
  double step = 0.0;
  bool exact = true;  // false when no grid point met the tolerance
  std::vector<PlanEntry> entries;

  const PlanEntry* find(std::string_view layer) const;
  bool operator==(const RankPlan&) const = default;
};

struct SearchOptions {
  double target_err = 0.5;
  double tolerance = 0.01;
  double step = 0.005;
};

/// Linear scan of the threshold grid {0, step, 2 step, ..., 1}, starting at
/// 0, stopping at the first k with |ERR(k) - target| <= tolerance. Layers
/// keep r = count(values >= k), floored at 1. Degenerate reports are skipped.
///
/// If the band is never hit but the target is reachable, returns the grid
/// point closest to the target with exact == false. Throws kUnreachable
/// (naming the maximum achievable ERR) when even k = 1 falls short, and
/// kInvalidArgument on bad options or no usable report.
RankPlan search_threshold(const std::vector<SpectrumReport>& reports,
                          const SearchOptions& options);

/// Retained ranks for a fixed threshold (same counting rule as the search).
RankPlan plan_for_threshold(const std::vector<SpectrumReport>& reports,
                            double threshold_k);

/// LRC iff rank < 0.5 * full_rank.
LayerClass classify(std::size_t rank, std::size_t full_rank);
RankPlan classify(RankPlan plan);

/// 1 - sum(rank) / sum(full_rank). Throws kInvalidArgument on an empty plan.
double achieved_err(const RankPlan& plan);

std::string plan_to_json(const RankPlan& plan);
RankPlan plan_from_json(std::string_view text);

}  // namespace welore
