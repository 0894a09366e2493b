// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "welore/corpus.hpp"
#include "welore/model.hpp"

namespace welore {

struct TrainConfig {
  std::size_t steps = 200;
  std::size_t batch = 8;
  std::size_t seq_len = 256;
  double lr = 5e-5;
  double warmup_frac = 0.05;
  double min_lr_ratio = 0.0;  // floor of the cosine decay, as a fraction of lr
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global-norm clip; <= 0 disables
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: no periodic checkpoints
  std::filesystem::path out_dir;     // checkpoints and logs; empty: none
  std::size_t eval_tokens = 8192;    // perplexity budget per evaluation
};

/// Linear warmup over warmup_frac * steps, then cosine decay to
/// min_lr_ratio * lr at the last step.
double scheduled_lr(const TrainConfig& config, std::size_t step);

struct FinetuneMode {
  enum class Kind { kFull, kLrcOnly, kNlrcOnly, kLora, kGalore };
  Kind kind = Kind::kFull;
  std::size_t rank = 8;              // LoRA / GaLore rank
  double alpha = 16.0;               // LoRA scale numerator (scale = alpha / rank)
  std::vector<std::string> targets;  // LoRA targets; empty: every projection
  std::size_t refresh_every = 200;   // GaLore projector refresh period
  bool include_norms = false;        // also train RMSNorm gains
};

std::string_view to_string(FinetuneMode::Kind kind);
FinetuneMode::Kind finetune_kind_from_string(std::string_view s);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double tokens_per_sec = 0.0;
};

struct TrainRun {
  Model model;  // adapters folded
  std::vector<StepRecord> log;
  std::size_t trainable_params = 0;
  std::size_t optimizer_state_elements = 0;
  // Parameters + gradients + optimizer state held during training.
  std::size_t peak_live_elements = 0;
  double tokens_per_sec = 0.0;  // mean over steps after the first 10
  double ppl_before = 0.0;
  double ppl_after = 0.0;
  std::vector<std::filesystem::path> checkpoints;
};

/// Adam with optional GaLore-style projection of projection-matrix
/// gradients: moments live in the r-dimensional left subspace spanned by the
/// gradient's top-r left singular vectors, refreshed every refresh_every
/// steps. When r >= min(m, n) the subspace is the whole space and the
/// update runs in the original basis.
struct GaloreOptions {
  bool enabled = false;
  std::size_t rank = 8;
  std::size_t refresh_every = 200;
};

class AdamOptimizer {
 public:
  using Galore = GaloreOptions;

  /// Allocates state for every parameter with a non-empty gradient buffer.
  AdamOptimizer(Model& model, const Model& grads, const TrainConfig& config,
                Galore galore = {});

  void step(Model& model, const Model& grads, double lr);

  std::size_t state_elements() const;
  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    std::size_t index;  // position in parameters()
    bool galore = false;
    Matrix projector;   // m x r, empty when not projecting
    Matrix m, v;
  };
  std::vector<Slot> slots_;
  TrainConfig config_;
  Galore galore_;
  std::size_t t_ = 0;
};

/// Trainability predicate for a fine-tune mode.
ParamFilter trainable_filter(const FinetuneMode& mode);

/// Attaches zero-initialized adapters (u = 0, v random) to LoRA targets.
/// Throws kInvalidArgument naming targets that match no projection.
Model attach_lora(const Model& model, const FinetuneMode& mode, std::uint64_t seed);

/// Element count of tensors passing `filter`.
std::size_t count_params(Model& model, const ParamFilter& filter);

double perplexity(const Model& model, const Corpus& corpus, std::size_t seq_len,
                  std::size_t max_tokens = 8192);

using StepCallback = std::function<void(const StepRecord&)>;

/// Pretraining: every tensor trainable. Throws kNumerical on a non-finite
/// loss. Bit-reproducible for a fixed seed.
TrainRun train(Model model, const Corpus& corpus, const TrainConfig& config,
               const StepCallback& on_step = {});

/// Fine-tuning under `mode`. LrcOnly / NlrcOnly require LRC/NLRC labels.
TrainRun finetune(const Model& model, const Corpus& corpus, const FinetuneMode& mode,
                  const TrainConfig& config, const StepCallback& on_step = {});

}  // namespace welore
