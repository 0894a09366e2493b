// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/spectrum.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "welore/error.hpp"
#include "welore/svd.hpp"

namespace welore {

SpectrumReport normalize_spectrum(std::vector<double> sigma,
                                  std::string layer_name) {
  std::sort(sigma.begin(), sigma.end(), std::greater<>());
  SpectrumReport r;
  r.layer_name = std::move(layer_name);
  r.full_rank = sigma.size();
  const double top = sigma.empty() ? 0.0 : sigma.front();
  if (top == 0.0) {
    r.values.assign(sigma.size(), 0.0);
    r.degenerate = true;
    return r;
  }
  r.values.resize(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i)
    r.values[i] = std::clamp(sigma[i] / top, 0.0, 1.0);
  r.values[0] = 1.0;
  return r;
}

SpectrumReport analyze(const Matrix& w, std::string layer_name) {
  return normalize_spectrum(svd(w).sigma, std::move(layer_name));
}

TailStats::TailStats(const SpectrumReport& report) : values_(report.values) {
  if (report.degenerate || values_.empty() || values_.front() == 0.0)
    throw Error(ErrorCode::kDegenerate,
                "tail_stats: layer '" + report.layer_name +
                    "' has an all-zero spectrum");
  cumulative_.resize(values_.size() + 1, 0.0);
  for (std::size_t i = 0; i < values_.size(); ++i)
    cumulative_[i + 1] = cumulative_[i] + values_[i] * values_[i];
}

double TailStats::energy_at(double fraction) const {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw Error(ErrorCode::kRange, "energy_at: fraction outside [0, 1]");
  const double n = static_cast<double>(values_.size());
  auto count = static_cast<std::size_t>(std::ceil(fraction * n - 1e-9));
  count = std::min(count, values_.size());
  return cumulative_[count] / cumulative_.back();
}

std::size_t TailStats::effective_rank_at(double threshold) const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(),
                    [threshold](double v) { return v >= threshold; }));
}

TailStats tail_stats(const SpectrumReport& report) { return TailStats(report); }

void write_spectra_csv(std::ostream& os,
                       const std::vector<SpectrumReport>& reports) {
  char buf[32];
  for (const auto& r : reports) {
    os << r.layer_name;
    for (double v : r.values) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
}

std::vector<SpectrumReport> read_spectra_csv(std::istream& is) {
  std::vector<SpectrumReport> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() ||
          !std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw Error(ErrorCode::kFormat, "spectra csv line " +
                                            std::to_string(line_no) +
                                            ": bad value '" + cell + "'");
      }
      values.push_back(v);
    }
    if (values.empty())
      throw Error(ErrorCode::kFormat,
                  "spectra csv line " + std::to_string(line_no) + ": no values");
    std::string name = line.substr(0, line.find(','));
    out.push_back(normalize_spectrum(std::move(values), std::move(name)));
  }
  return out;
}

}  // namespace welore
