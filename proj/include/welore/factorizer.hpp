// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "welore/matrix.hpp"
#include "welore/model.hpp"
#include "welore/rank_plan.hpp"
#include "welore/spectrum.hpp"
#include "welore/svd.hpp"

namespace welore {

struct LayerReport {
  std::string layer;
  LayerClass cls = LayerClass::kUnlabeled;
  std::size_t full_rank = 0;
  std::size_t rank = 0;  // stored rank (full_rank when kept dense)
  double abs_error = 0.0;
  double rel_error = 0.0;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
};

struct CompressionReport {
  std::vector<LayerReport> layers;
  std::size_t original_params = 0;
  std::size_t compressed_params = 0;
  double param_ratio = 1.0;
};

void write_report_csv(std::ostream& os, const CompressionReport& report);

struct CompressOptions {
  // Truncate N-LRCs at their planned rank too (strict ERR accounting);
  // otherwise they stay dense.
  bool force_nlrc_truncate = false;
};

struct CompressResult {
  Model model;
  CompressionReport report;
};

/// Spectra of every projection matrix, in model order.
std::vector<SpectrumReport> analyze_model(const Model& model);

/// Factorizes LRCs at their planned rank (A = U S^1/2, B = S^1/2 V^T) and
/// keeps N-LRCs dense. A layer is only factored if r (m + n) < m n. Labels
/// from the plan are copied onto the projections. Throws kPlanMismatch
/// listing projections missing from the plan and plan entries without a
/// projection.
CompressResult compress(const Model& model, const RankPlan& plan,
                        const CompressOptions& options = {});

/// Calibration second moment sum_x x x^T of one projection's inputs.
struct ActivationStats {
  std::string layer;
  Matrix second_moment;  // in x in, symmetric PSD
  std::size_t sample_count = 0;

  void accumulate(const Matrix& inputs);  // rows are samples
};

/// Relative damping applied before whitening: eps * trace(C) / n.
inline constexpr double kWhiteningDamping = 1e-6;

/// Activation-whitened truncation of one matrix: with S S^T = C + damping
/// (Cholesky), take the rank-r SVD of W S and return A = U_r Sigma_r,
/// B = V_r^T S^-1. Minimizes ||(W - A B) S||_F over rank-r products.
LowRankFactors whitened_truncate(const Matrix& w, const Matrix& second_moment,
                                 std::size_t rank);

/// ||(W - A B) S||_F with S the damped Cholesky factor of second_moment.
double activation_error(const Matrix& w, const Matrix& a, const Matrix& b,
                        const Matrix& second_moment);

using ActivationStatsMap = std::map<std::string, ActivationStats>;

/// compress() with whitened truncation for every factored layer. Throws
/// kInvalidArgument when a factored layer has no stats, kNumerical when a
/// damped second moment is still singular.
CompressResult activation_whitened_compress(const Model& model,
                                            const RankPlan& plan,
                                            const ActivationStatsMap& stats,
                                            const CompressOptions& options = {});

enum class PruneMetric { kMagnitude, kActivationNorm };

/// Zeroes the lowest-scoring round(sparsity * m * n) entries of each dense
/// N-LRC (unstructured, per matrix). Score is |w_ij| for magnitude and
/// |w_ij| * ||x_j|| for activation-norm, where ||x_j||^2 is the j-th
/// diagonal entry of the second moment. Ties keep the lower flat index.
void prune_matrix(Matrix& w, double sparsity, PruneMetric metric,
                  const std::vector<double>& input_norms = {});

/// Prunes every dense N-LRC. Throws kInvalidArgument when a factored layer
/// is named in `layers`, on sparsity outside [0, 1) or missing stats.
Model prune_nlrc(const Model& model, double sparsity, PruneMetric metric,
                 const ActivationStatsMap* stats = nullptr,
                 const std::vector<std::string>& layers = {});

struct MemoryEstimate {
  std::size_t total_params = 0;
  std::size_t weight_bytes = 0;
};

MemoryEstimate estimate_memory(const Model& model, std::size_t bytes_per_param);

/// Shape-only description of a LLaMA-style model, for estimates without
/// weights.
struct ArchitectureShape {
  std::size_t vocab = 32000;
  std::size_t hidden = 4096;
  std::size_t intermediate = 11008;
  std::size_t n_layers = 32;
  bool tied_embeddings = false;

  struct Layer {
    std::string name;
    ProjKind kind;
    std::size_t rows, cols;
  };
  std::vector<Layer> projection_layers() const;
  std::size_t non_projection_params() const;  // embeddings, head, norms
  std::size_t dense_params() const;
};

ArchitectureShape llama2_7b_shape();

/// Parameter count after applying `plan` to an architecture: factored where
/// the policy factors and r (m + n) < m n, dense otherwise.
std::size_t planned_params(const ArchitectureShape& arch, const RankPlan& plan,
                           const CompressOptions& options = {});

}  // namespace welore
