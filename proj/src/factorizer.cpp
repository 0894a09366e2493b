// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/factorizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "welore/error.hpp"
#include "welore/parallel.hpp"

namespace welore {

namespace {

bool shrinks(std::size_t rank, std::size_t rows, std::size_t cols) {
  return rank * (rows + cols) < rows * cols;
}

void check_plan_covers(const Model& model, const RankPlan& plan) {
  std::vector<std::string> missing, unknown, wrong_rank;
  std::set<std::string> names;
  for (const auto* p : model.projections()) {
    names.insert(p->name);
    const PlanEntry* e = plan.find(p->name);
    if (e == nullptr)
      missing.push_back(p->name);
    else if (e->full_rank != p->full_rank())
      wrong_rank.push_back(p->name);
  }
  for (const auto& e : plan.entries)
    if (!names.count(e.layer)) unknown.push_back(e.layer);
  if (missing.empty() && unknown.empty() && wrong_rank.empty()) return;

  std::ostringstream os;
  os << "plan does not match model layers;";
  auto list = [&os](const char* label, const std::vector<std::string>& v) {
    if (v.empty()) return;
    os << ' ' << label << ':';
    for (const auto& s : v) os << ' ' << s;
    os << ';';
  };
  list("missing from plan", missing);
  list("not in model", unknown);
  list("full_rank mismatch", wrong_rank);
  throw Error(ErrorCode::kPlanMismatch, os.str());
}

struct LayerDecision {
  Projection* proj;
  std::size_t rank;
  LayerClass cls;
  bool factor;
};

using Truncator = std::function<LowRankFactors(const Projection&, const Matrix&, std::size_t)>;

CompressResult compress_with(const Model& model, const RankPlan& plan,
                             const CompressOptions& options,
                             const Truncator& truncator, const std::string& split) {
  check_plan_covers(model, plan);
  CompressResult out{model, {}};
  auto projections = out.model.projections();
  std::vector<LayerDecision> decisions;
  for (auto* p : projections) {
    const PlanEntry& e = *plan.find(p->name);
    const LayerClass cls = e.cls == LayerClass::kUnlabeled
                               ? classify(e.rank, e.full_rank)
                               : e.cls;
    const bool wanted = cls == LayerClass::kLRC || options.force_nlrc_truncate;
    const bool factor = wanted && e.rank < p->rank() && shrinks(e.rank, p->rows(), p->cols());
    decisions.push_back({p, e.rank, cls, factor});
  }

  std::vector<LayerReport> reports(decisions.size());
  parallel_for(decisions.size(), [&](std::size_t i) {
    const LayerDecision& d = decisions[i];
    Projection& p = *d.proj;
    LayerReport& r = reports[i];
    r.layer = p.name;
    r.cls = d.cls;
    r.full_rank = p.full_rank();
    r.params_before = p.param_count();
    p.cls = d.cls;
    if (d.factor) {
      const Matrix w = p.materialize();
      LowRankFactors f = truncator(p, w, d.rank);
      r.abs_error = frobenius_error(w, f.a, f.b);
      const double norm = frobenius_norm(w);
      r.rel_error = norm > 0.0 ? r.abs_error / norm : 0.0;
      p.weight = FactoredWeight{std::move(f.a), std::move(f.b), split};
    }
    r.rank = p.rank();
    r.params_after = p.param_count();
  });

  out.report.layers = std::move(reports);
  out.report.original_params = model.param_count();
  out.report.compressed_params = out.model.param_count();
  out.report.param_ratio = static_cast<double>(out.report.compressed_params) /
                           static_cast<double>(out.report.original_params);
  return out;
}

Matrix damped_factor(const Matrix& second_moment) {
  const std::size_t n = second_moment.rows();
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += second_moment(i, i);
  Matrix c = second_moment;
  const double eps = kWhiteningDamping * trace / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) c(i, i) += eps;
  try {
    return cholesky(c);
  } catch (const Error&) {
    throw Error(ErrorCode::kNumerical,
                "activation second moment is singular after damping; use a "
                "larger damping or more calibration samples");
  }
}

}  // namespace

void write_report_csv(std::ostream& os, const CompressionReport& report) {
  os << "layer,class,full_rank,rank,abs_error,rel_error,params_before,params_after\n";
  char buf[64];
  for (const auto& l : report.layers) {
    os << l.layer << ',' << to_string(l.cls) << ',' << l.full_rank << ',' << l.rank;
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", l.abs_error, l.rel_error);
    os << buf << ',' << l.params_before << ',' << l.params_after << '\n';
  }
}

std::vector<SpectrumReport> analyze_model(const Model& model) {
  const auto projections = model.projections();
  std::vector<SpectrumReport> out(projections.size());
  parallel_for(projections.size(), [&](std::size_t i) {
    out[i] = analyze(projections[i]->materialize(), projections[i]->name);
  });
  return out;
}

CompressResult compress(const Model& model, const RankPlan& plan,
                        const CompressOptions& options) {
  return compress_with(
      model, plan, options,
      [](const Projection&, const Matrix& w, std::size_t r) { return truncate(svd(w), r); },
      "symmetric");
}

void ActivationStats::accumulate(const Matrix& inputs) {
  if (second_moment.empty()) second_moment = Matrix(inputs.cols(), inputs.cols());
  require_same_shape(second_moment, Matrix(inputs.cols(), inputs.cols()),
                     "activation stats");
  add_matmul_tn(second_moment, inputs, inputs);
  sample_count += inputs.rows();
}

LowRankFactors whitened_truncate(const Matrix& w, const Matrix& second_moment,
                                 std::size_t rank) {
  if (second_moment.rows() != w.cols() || second_moment.cols() != w.cols())
    throw Error(ErrorCode::kDimension, "whitened_truncate: second moment must be in x in");
  const Matrix s = damped_factor(second_moment);
  const SvdResult ws = svd(matmul(w, s));
  const std::size_t p = ws.sigma.size();
  if (rank == 0 || rank > p)
    throw Error(ErrorCode::kRange, "whitened_truncate: rank out of range");
  const Matrix s_inv = inverse_lower_triangular(s);
  Matrix a(w.rows(), rank), vt_r(rank, w.cols());
  for (std::size_t k = 0; k < rank; ++k) {
    for (std::size_t i = 0; i < w.rows(); ++i) a(i, k) = ws.u(i, k) * ws.sigma[k];
    for (std::size_t j = 0; j < w.cols(); ++j) vt_r(k, j) = ws.vt(k, j);
  }
  return {std::move(a), matmul(vt_r, s_inv)};
}

double activation_error(const Matrix& w, const Matrix& a, const Matrix& b,
                        const Matrix& second_moment) {
  const Matrix s = damped_factor(second_moment);
  return frobenius_norm(matmul(w - matmul(a, b), s));
}

CompressResult activation_whitened_compress(const Model& model, const RankPlan& plan,
                                            const ActivationStatsMap& stats,
                                            const CompressOptions& options) {
  return compress_with(
      model, plan, options,
      [&stats](const Projection& p, const Matrix& w, std::size_t r) {
        const auto it = stats.find(p.name);
        if (it == stats.end() || it->second.second_moment.empty())
          throw Error(ErrorCode::kInvalidArgument,
                      "no activation statistics for layer '" + p.name + "'");
        return whitened_truncate(w, it->second.second_moment, r);
      },
      "whitened");
}

void prune_matrix(Matrix& w, double sparsity, PruneMetric metric,
                  const std::vector<double>& input_norms) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "sparsity must lie in [0, 1)");
  if (metric == PruneMetric::kActivationNorm && input_norms.size() != w.cols())
    throw Error(ErrorCode::kInvalidArgument,
                "activation-norm pruning needs one input norm per column");
  const std::size_t n = w.size();
  const auto count = static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(n)));
  if (count == 0) return;
  std::vector<double> score(n);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const double mag = std::abs(w(i, j));
      score[i * w.cols() + j] =
          metric == PruneMetric::kMagnitude ? mag : mag * input_norms[j];
    }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&score](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  for (std::size_t k = 0; k < count; ++k) w.data()[order[k]] = 0.0;
}

Model prune_nlrc(const Model& model, double sparsity, PruneMetric metric,
                 const ActivationStatsMap* stats, const std::vector<std::string>& layers) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "sparsity must lie in [0, 1)");
  if (metric == PruneMetric::kActivationNorm && stats == nullptr)
    throw Error(ErrorCode::kInvalidArgument, "activation-norm pruning needs activation stats");
  Model out = model;
  std::vector<Projection*> targets;
  if (layers.empty()) {
    for (auto* p : out.projections())
      if (p->cls == LayerClass::kNLRC) targets.push_back(p);
  } else {
    for (const auto& name : layers) {
      Projection* p = out.find_projection(name);
      if (p == nullptr)
        throw Error(ErrorCode::kInvalidArgument, "prune: unknown layer '" + name + "'");
      targets.push_back(p);
    }
  }
  for (auto* p : targets) {
    if (p->is_factored())
      throw Error(ErrorCode::kInvalidArgument,
                  "prune: layer '" + p->name + "' is factored; only dense N-LRCs can be pruned");
    if (sparsity == 0.0) continue;
    std::vector<double> norms;
    if (metric == PruneMetric::kActivationNorm) {
      const auto it = stats->find(p->name);
      if (it == stats->end())
        throw Error(ErrorCode::kInvalidArgument, "prune: no activation stats for '" + p->name + "'");
      const Matrix& c = it->second.second_moment;
      norms.resize(c.rows());
      for (std::size_t j = 0; j < c.rows(); ++j) norms[j] = std::sqrt(std::max(0.0, c(j, j)));
    }
    prune_matrix(std::get<DenseWeight>(p->weight).w, sparsity, metric, norms);
  }
  return out;
}

MemoryEstimate estimate_memory(const Model& model, std::size_t bytes_per_param) {
  MemoryEstimate e;
  e.total_params = model.param_count();
  e.weight_bytes = e.total_params * bytes_per_param;
  return e;
}

std::vector<ArchitectureShape::Layer> ArchitectureShape::projection_layers() const {
  std::vector<Layer> out;
  const ProjKind kinds[] = {ProjKind::kQ,    ProjKind::kK,  ProjKind::kV, ProjKind::kO,
                            ProjKind::kGate, ProjKind::kUp, ProjKind::kDown};
  for (std::size_t l = 0; l < n_layers; ++l) {
    for (ProjKind k : kinds) {
      std::size_t rows = hidden, cols = hidden;
      if (k == ProjKind::kGate || k == ProjKind::kUp) rows = intermediate;
      if (k == ProjKind::kDown) cols = intermediate;
      out.push_back({"layers." + std::to_string(l) + "." + std::string(to_string(k)), k, rows, cols});
    }
  }
  return out;
}

std::size_t ArchitectureShape::non_projection_params() const {
  const std::size_t emb = vocab * hidden;
  return emb + (tied_embeddings ? 0 : emb) + (2 * n_layers + 1) * hidden;
}

std::size_t ArchitectureShape::dense_params() const {
  std::size_t n = non_projection_params();
  for (const auto& l : projection_layers()) n += l.rows * l.cols;
  return n;
}

ArchitectureShape llama2_7b_shape() { return ArchitectureShape{}; }

std::size_t planned_params(const ArchitectureShape& arch, const RankPlan& plan,
                           const CompressOptions& options) {
  std::size_t n = arch.non_projection_params();
  for (const auto& l : arch.projection_layers()) {
    const PlanEntry* e = plan.find(l.name);
    if (e == nullptr)
      throw Error(ErrorCode::kPlanMismatch, "plan has no entry for '" + l.name + "'");
    const LayerClass cls = e->cls == LayerClass::kUnlabeled ? classify(e->rank, e->full_rank) : e->cls;
    const bool factor = (cls == LayerClass::kLRC || options.force_nlrc_truncate) &&
                        shrinks(e->rank, l.rows, l.cols);
    n += factor ? e->rank * (l.rows + l.cols) : l.rows * l.cols;
  }
  return n;
}

}  // namespace welore
