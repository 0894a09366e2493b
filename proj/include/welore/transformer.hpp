// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "welore/factorizer.hpp"
#include "welore/matrix.hpp"
#include "welore/model.hpp"

namespace welore {

/// Each sequence holds T + 1 byte tokens: positions [0, T) are inputs and
/// positions [1, T] the next-token targets.
struct TokenBatch {
  std::vector<std::vector<std::uint8_t>> sequences;

  std::size_t token_count() const;  // number of predicted tokens
};

/// T x vocab logits for one input sequence (causal). Throws kRange when the
/// sequence exceeds max_seq.
Matrix logits(const Model& model, std::span<const std::uint8_t> tokens);

/// Attention probabilities of one block/head (T x T), for inspection.
Matrix attention_probabilities(const Model& model,
                               std::span<const std::uint8_t> tokens,
                               std::size_t block, std::size_t head);

/// Mean next-token cross-entropy over the batch.
double loss(const Model& model, const TokenBatch& batch);

/// Mean cross-entropy plus exact reverse-mode gradients. Gradients are added
/// into the non-empty tensors of `grads` (same structure as `model`, see
/// zeros_like); empty tensors are frozen and receive nothing.
double loss_and_grad(const Model& model, const TokenBatch& batch, Model& grads);

/// Second moments of every projection's inputs over the batch (calibration
/// for activation-whitened compression and activation-norm pruning).
ActivationStatsMap collect_activation_stats(const Model& model, const TokenBatch& batch);

}  // namespace welore
