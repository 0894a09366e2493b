// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "welore/matrix.hpp"

namespace welore {

/// Sorted singular values of one layer divided by the largest one.
struct SpectrumReport {
  std::string layer_name;
  std::vector<double> values;  // non-increasing, in [0, 1]
  std::size_t full_rank = 0;   // min(rows, cols) == values.size()
  bool degenerate = false;     // all-zero matrix; excluded from planning
};

SpectrumReport analyze(const Matrix& w, std::string layer_name);

/// Max-normalizes an already-computed sigma vector.
SpectrumReport normalize_spectrum(std::vector<double> sigma,
                                  std::string layer_name);

/// Heavy-tail summaries of a spectrum. Construction throws kDegenerate on an
/// all-zero report.
class TailStats {
 public:
  explicit TailStats(const SpectrumReport& report);

  /// Share of the normalized squared spectrum carried by the leading
  /// ceil(fraction * full_rank) values; fraction in [0, 1].
  double energy_at(double fraction) const;

  /// Number of normalized values >= threshold.
  std::size_t effective_rank_at(double threshold) const;

 private:
  std::vector<double> values_;
  std::vector<double> cumulative_;  // prefix sums of values^2
};

TailStats tail_stats(const SpectrumReport& report);

// CSV: one row per layer, layer name then normalized values (%.17g).
void write_spectra_csv(std::ostream& os, const std::vector<SpectrumReport>& reports);
std::vector<SpectrumReport> read_spectra_csv(std::istream& is);

}  // namespace welore
