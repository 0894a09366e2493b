// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "welore/corpus.hpp"
#include "welore/matrix.hpp"
#include "welore/spectrum.hpp"

namespace welore {

/// Gradients of selected layers on one fixed probe batch, captured at a
/// sequence of training checkpoints.
struct DynamicsTrace {
  std::vector<std::size_t> checkpoint_steps;
  std::uint64_t probe_seed = 0;
  std::vector<std::string> layers;
  // layer -> one entry per checkpoint
  std::map<std::string, std::vector<Matrix>> gradients;
  std::map<std::string, std::vector<SpectrumReport>> gradient_spectra;
  std::map<std::string, std::vector<SpectrumReport>> weight_spectra;
};

struct ProbeOptions {
  std::uint64_t seed = 1234;
  std::size_t batch = 4;
  std::size_t seq_len = 64;
};

struct CheckpointRef {
  std::size_t step = 0;
  std::filesystem::path path;
};

/// One backward pass per checkpoint on the batch drawn from `probe.seed`;
/// gradients of projections whose name matches `layer_pattern` (ECMAScript
/// regex search) are kept at 64-bit. Throws kFormat listing missing files.
DynamicsTrace capture(const std::vector<CheckpointRef>& checkpoints, const Corpus& corpus,
                      const ProbeOptions& probe, const std::string& layer_pattern = ".*");

/// Checkpoints ckpt_NNNNNN.wlr of a training run directory, in step order.
/// When `expected_every` > 0, throws kFormat listing the steps in
/// [0, expected_last] that have no checkpoint file.
std::vector<CheckpointRef> run_checkpoints(const std::filesystem::path& run_dir,
                                           std::size_t expected_every = 0,
                                           std::size_t expected_last = 0);

/// Pairwise cosine similarity of flattened gradients. Entries involving a
/// zero-norm gradient are NaN (undefined).
Matrix cosine_matrix(const std::vector<Matrix>& gradients);
Matrix cosine_matrix(const DynamicsTrace& trace, const std::string& layer);

enum class SpectrumTarget { kGradient, kWeight };

/// One max-normalized spectrum row per checkpoint.
Matrix spectrum_over_time(const DynamicsTrace& trace, const std::string& layer,
                          SpectrumTarget target);

/// Per checkpoint i: mean cosine similarity to all later checkpoints
/// (ignoring undefined entries). NaN for the last checkpoint or when no
/// later entry is defined.
std::vector<double> saturation_index(const Matrix& cosine);

/// True when some checkpoint at step <= horizon * total_steps has an index
/// above `cutoff`.
bool is_saturating(const std::vector<double>& index, const std::vector<std::size_t>& steps,
                   std::size_t total_steps, double cutoff = 0.9, double horizon = 0.3);

/// CSV bundle: per layer <layer>.cosine.csv, <layer>.saturation.csv,
/// <layer>.grad_spectrum.csv and <layer>.weight_spectrum.csv; full gradient
/// matrices only when `full_gradients` is set.
void write_trace_csv(const DynamicsTrace& trace, const std::filesystem::path& dir,
                     bool full_gradients = false);

}  // namespace welore
