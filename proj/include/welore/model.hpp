// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "welore/matrix.hpp"
#include "welore/rank_plan.hpp"

namespace welore {

/// Shape of the toy LLaMA-style decoder (byte vocabulary, pre-norm blocks
/// with RoPE attention and a SwiGLU MLP).
struct ModelConfig {
  std::size_t vocab = 256;
  std::size_t d_model = 64;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_seq = 256;
  double rope_base = 10000.0;
  double norm_eps = 1e-5;

  std::size_t head_dim() const { return d_model / n_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class ProjKind { kQ, kK, kV, kO, kGate, kUp, kDown };

std::string_view to_string(ProjKind kind);

struct DenseWeight {
  Matrix w;  // out x in
};

/// w ~= a * b with a: out x r, b: r x in.
struct FactoredWeight {
  Matrix a;
  Matrix b;
  std::string split = "symmetric";  // how singular values were assigned
};

/// Trainable low-rank adapter: effective weight w0 + scale * u * v.
struct LoraAdapter {
  Matrix u;  // out x r, zero at init
  Matrix v;  // r x in
  double scale = 1.0;
};

/// One of the seven per-block projection matrices, the only layers eligible
/// for rank planning.
struct Projection {
  std::string name;  // e.g. "layers.0.self_attn.q_proj"
  ProjKind kind = ProjKind::kQ;
  std::variant<DenseWeight, FactoredWeight> weight;
  LayerClass cls = LayerClass::kUnlabeled;
  std::optional<LoraAdapter> lora;

  bool is_factored() const {
    return std::holds_alternative<FactoredWeight>(weight);
  }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t full_rank() const { return std::min(rows(), cols()); }
  // Rank of the stored representation (full_rank for dense).
  std::size_t rank() const;
  std::size_t param_count() const;  // excludes adapters
  Matrix materialize() const;       // dense effective weight incl. adapter
};

struct Block {
  Matrix attn_norm;  // 1 x d
  Projection q, k, v, o;
  Matrix mlp_norm;   // 1 x d
  Projection gate, up, down;

  std::vector<Projection*> projections();
  std::vector<const Projection*> projections() const;
};

/// Toy decoder LM; also the in-memory form of a checkpoint.
struct Model {
  ModelConfig config;
  Matrix embed;       // vocab x d
  std::vector<Block> blocks;
  Matrix final_norm;  // 1 x d
  Matrix head;        // vocab x d

  std::vector<Projection*> projections();
  std::vector<const Projection*> projections() const;
  Projection* find_projection(std::string_view name);
  const Projection* find_projection(std::string_view name) const;

  std::size_t param_count() const;  // excludes adapters
};

/// Random init; deterministic for a given seed.
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// Same structure as `model`, every tensor set to zero. Tensors for which
/// `keep` returns false are left empty (0x0), i.e. frozen.
enum class ParamRole {
  kEmbedding,
  kNorm,
  kHead,
  kDense,
  kFactorA,
  kFactorB,
  kLoraU,
  kLoraV,
};

struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
  ParamRole role = ParamRole::kDense;
  const Projection* owner = nullptr;  // set for projection tensors
};

/// All tensors in a fixed order (embed, per block norms and projections,
/// final norm, head). Adapters follow their base projection.
std::vector<ParamRef> parameters(Model& model);

using ParamFilter = std::function<bool(const ParamRef&)>;
Model zeros_like(const Model& model, const ParamFilter& keep);

/// Replaces every factored/adapted projection by its dense effective weight.
Model densified(const Model& model);

}  // namespace welore
