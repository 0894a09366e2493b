// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/rank_plan.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "welore/error.hpp"

namespace welore {

namespace {

using json = nlohmann::ordered_json;

// Number of values strictly below k in a non-increasing sequence.
std::size_t count_below(const std::vector<double>& values, double k) {
  auto it = std::partition_point(values.begin(), values.end(),
                                 [k](double v) { return v >= k; });
  return static_cast<std::size_t>(values.end() - it);
}

struct SearchState {
  double threshold = 0.0;      // H
  std::size_t discarded = 0;   // P_r
  std::size_t total = 0;       // P_t
  double ratio = 0.0;          // s_t
};

SearchState evaluate(const std::vector<const SpectrumReport*>& usable,
                     double k) {
  SearchState st;
  st.threshold = k;
  for (const auto* r : usable) {
    const std::size_t below = count_below(r->values, k);
    const std::size_t kept = std::max<std::size_t>(1, r->full_rank - below);
    st.discarded += r->full_rank - kept;
    st.total += r->full_rank;
  }
  st.ratio = static_cast<double>(st.discarded) / static_cast<double>(st.total);
  return st;
}

// Grid point i of an n-interval grid over [0, 1]. Uses i / n when the step
// divides 1 so that e.g. 40 * 0.005 and 0.2 compare as written.
double grid_point(std::size_t i, std::size_t n, double step) {
  if (std::abs(static_cast<double>(n) * step - 1.0) < 1e-12)
    return static_cast<double>(i) / static_cast<double>(n);
  return std::min(1.0, static_cast<double>(i) * step);
}

std::vector<const SpectrumReport*> usable_reports(
    const std::vector<SpectrumReport>& reports) {
  std::vector<const SpectrumReport*> usable;
  for (const auto& r : reports)
    if (!r.degenerate && r.full_rank > 0) usable.push_back(&r);
  if (usable.empty())
    throw Error(ErrorCode::kInvalidArgument,
                "rank planning needs at least one non-degenerate spectrum");
  return usable;
}

}  // namespace

std::string_view to_string(LayerClass c) {
  switch (c) {
    case LayerClass::kLRC: return "LRC";
    case LayerClass::kNLRC: return "NLRC";
    case LayerClass::kUnlabeled: return "unlabeled";
  }
  return "unlabeled";
}

LayerClass layer_class_from_string(std::string_view s) {
  if (s == "LRC") return LayerClass::kLRC;
  if (s == "NLRC") return LayerClass::kNLRC;
  if (s == "unlabeled" || s.empty()) return LayerClass::kUnlabeled;
  throw Error(ErrorCode::kFormat, "unknown layer class '" + std::string(s) + "'");
}

const PlanEntry* RankPlan::find(std::string_view layer) const {
  for (const auto& e : entries)
    if (e.layer == layer) return &e;
  return nullptr;
}

RankPlan plan_for_threshold(const std::vector<SpectrumReport>& reports,
                            double threshold_k) {
  RankPlan plan;
  plan.threshold_k = threshold_k;
  for (const auto& r : reports) {
    if (r.degenerate || r.full_rank == 0) continue;
    const std::size_t below = count_below(r.values, threshold_k);
    plan.entries.push_back(
        {r.layer_name, r.full_rank,
         std::max<std::size_t>(1, r.full_rank - below), LayerClass::kUnlabeled});
  }
  if (plan.entries.empty())
    throw Error(ErrorCode::kInvalidArgument,
                "rank planning needs at least one non-degenerate spectrum");
  plan.achieved_err = achieved_err(plan);
  return classify(std::move(plan));
}

RankPlan search_threshold(const std::vector<SpectrumReport>& reports,
                          const SearchOptions& options) {
  const double target = options.target_err;
  const double tol = options.tolerance;
  const double step = options.step;
  if (!(target > 0.0 && target < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "target ERR must lie in (0, 1)");
  if (!(tol > 0.0 && tol < target))
    throw Error(ErrorCode::kInvalidArgument,
                "tolerance must lie in (0, target ERR)");
  if (!(step > 0.0 && step <= 0.05))
    throw Error(ErrorCode::kInvalidArgument, "grid step must lie in (0, 0.05]");

  const auto usable = usable_reports(reports);
  const auto n = static_cast<std::size_t>(std::ceil(1.0 / step - 1e-9));

  const SearchState at_max = evaluate(usable, 1.0);
  if (at_max.ratio < target - tol) {
    std::ostringstream os;
    os << "target ERR " << target << " unreachable; maximum achievable ERR is "
       << at_max.ratio;
    throw Error(ErrorCode::kUnreachable, os.str());
  }

  // H starts at 0 and grows by one grid step until s_t enters the band.
  std::optional<SearchState> hit;
  SearchState best = evaluate(usable, 0.0);
  for (std::size_t i = 0; i <= n; ++i) {
    const SearchState st = evaluate(usable, grid_point(i, n, step));
    if (std::abs(st.ratio - target) <= tol) {
      hit = st;
      break;
    }
    if (std::abs(st.ratio - target) < std::abs(best.ratio - target)) best = st;
  }

  RankPlan plan = plan_for_threshold(reports, hit ? hit->threshold : best.threshold);
  plan.target_err = target;
  plan.tolerance = tol;
  plan.step = step;
  plan.exact = hit.has_value();
  return plan;
}

LayerClass classify(std::size_t rank, std::size_t full_rank) {
  // rank < 0.5 * full_rank, in integers.
  return 2 * rank < full_rank ? LayerClass::kLRC : LayerClass::kNLRC;
}

RankPlan classify(RankPlan plan) {
  for (auto& e : plan.entries) e.cls = classify(e.rank, e.full_rank);
  return plan;
}

double achieved_err(const RankPlan& plan) {
  if (plan.entries.empty())
    throw Error(ErrorCode::kInvalidArgument, "achieved_err: empty plan");
  std::size_t kept = 0, total = 0;
  for (const auto& e : plan.entries) {
    kept += e.rank;
    total += e.full_rank;
  }
  return 1.0 - static_cast<double>(kept) / static_cast<double>(total);
}

std::string plan_to_json(const RankPlan& plan) {
  json j;
  j["threshold_k"] = plan.threshold_k;
  j["target_err"] = plan.target_err;
  j["achieved_err"] = plan.achieved_err;
  j["tolerance"] = plan.tolerance;
  j["step"] = plan.step;
  j["exact"] = plan.exact;
  json entries = json::array();
  for (const auto& e : plan.entries) {
    entries.push_back({{"layer", e.layer},
                       {"full_rank", e.full_rank},
                       {"rank", e.rank},
                       {"class", std::string(to_string(e.cls))}});
  }
  j["entries"] = std::move(entries);
  return j.dump(2);
}

RankPlan plan_from_json(std::string_view text) {
  RankPlan plan;
  try {
    const json j = json::parse(text);
    plan.threshold_k = j.at("threshold_k").get<double>();
    plan.target_err = j.at("target_err").get<double>();
    plan.achieved_err = j.at("achieved_err").get<double>();
    plan.tolerance = j.at("tolerance").get<double>();
    plan.step = j.value("step", 0.0);
    plan.exact = j.value("exact", true);
    for (const auto& e : j.at("entries")) {
      PlanEntry entry;
      entry.layer = e.at("layer").get<std::string>();
      entry.full_rank = e.at("full_rank").get<std::size_t>();
      entry.rank = e.at("rank").get<std::size_t>();
      entry.cls = layer_class_from_string(e.value("class", std::string()));
      if (entry.rank < 1 || entry.rank > entry.full_rank)
        throw Error(ErrorCode::kFormat, "plan entry '" + entry.layer +
                                            "' has rank outside [1, full_rank]");
      plan.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kFormat, std::string("plan json: ") + ex.what());
  }
  return plan;
}

}  // namespace welore
