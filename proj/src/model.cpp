// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/model.hpp"

#include <cmath>
#include <random>

#include "welore/error.hpp"

namespace welore {

void ModelConfig::validate() const {
  if (vocab == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 ||
      d_ff == 0 || max_seq == 0)
    throw Error(ErrorCode::kInvalidArgument, "model config: zero dimension");
  if (d_model % n_heads != 0)
    throw Error(ErrorCode::kInvalidArgument,
                "model config: d_model must be divisible by n_heads");
  if (head_dim() % 2 != 0)
    throw Error(ErrorCode::kInvalidArgument,
                "model config: head dimension must be even for rotary encoding");
}

std::string_view to_string(ProjKind kind) {
  switch (kind) {
    case ProjKind::kQ: return "self_attn.q_proj";
    case ProjKind::kK: return "self_attn.k_proj";
    case ProjKind::kV: return "self_attn.v_proj";
    case ProjKind::kO: return "self_attn.o_proj";
    case ProjKind::kGate: return "mlp.gate_proj";
    case ProjKind::kUp: return "mlp.up_proj";
    case ProjKind::kDown: return "mlp.down_proj";
  }
  return "?";
}

std::size_t Projection::rows() const {
  return std::visit(
      [](const auto& w) {
        if constexpr (std::is_same_v<std::decay_t<decltype(w)>, DenseWeight>)
          return w.w.rows();
        else
          return w.a.rows();
      },
      weight);
}

std::size_t Projection::cols() const {
  return std::visit(
      [](const auto& w) {
        if constexpr (std::is_same_v<std::decay_t<decltype(w)>, DenseWeight>)
          return w.w.cols();
        else
          return w.b.cols();
      },
      weight);
}

std::size_t Projection::rank() const {
  if (const auto* f = std::get_if<FactoredWeight>(&weight)) return f->a.cols();
  return full_rank();
}

std::size_t Projection::param_count() const {
  if (const auto* f = std::get_if<FactoredWeight>(&weight))
    return f->a.size() + f->b.size();
  return rows() * cols();
}

Matrix Projection::materialize() const {
  Matrix w;
  if (const auto* f = std::get_if<FactoredWeight>(&weight))
    w = matmul(f->a, f->b);
  else
    w = std::get<DenseWeight>(weight).w;
  if (lora) add_matmul(w, lora->u, lora->v, lora->scale);
  return w;
}

std::vector<Projection*> Block::projections() {
  return {&q, &k, &v, &o, &gate, &up, &down};
}

std::vector<const Projection*> Block::projections() const {
  return {&q, &k, &v, &o, &gate, &up, &down};
}

std::vector<Projection*> Model::projections() {
  std::vector<Projection*> out;
  for (auto& b : blocks)
    for (auto* p : b.projections()) out.push_back(p);
  return out;
}

std::vector<const Projection*> Model::projections() const {
  std::vector<const Projection*> out;
  for (const auto& b : blocks)
    for (const auto* p : b.projections()) out.push_back(p);
  return out;
}

Projection* Model::find_projection(std::string_view name) {
  for (auto* p : projections())
    if (p->name == name) return p;
  return nullptr;
}

const Projection* Model::find_projection(std::string_view name) const {
  for (const auto* p : projections())
    if (p->name == name) return p;
  return nullptr;
}

std::size_t Model::param_count() const {
  std::size_t n = embed.size() + final_norm.size() + head.size();
  for (const auto& b : blocks) {
    n += b.attn_norm.size() + b.mlp_norm.size();
    for (const auto* p : b.projections()) n += p->param_count();
  }
  return n;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto gaussian = [&rng](std::size_t rows, std::size_t cols, double std) {
    std::normal_distribution<double> dist(0.0, std);
    Matrix m(rows, cols);
    for (double& x : m.data()) x = dist(rng);
    return m;
  };
  const std::size_t d = config.d_model, f = config.d_ff;
  const double residual_scale = 1.0 / std::sqrt(2.0 * config.n_layers);

  Model m;
  m.config = config;
  m.embed = gaussian(config.vocab, d, 0.5);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    Block b;
    const std::string prefix = "layers." + std::to_string(l) + ".";
    auto proj = [&](ProjKind kind, std::size_t out, std::size_t in, double scale) {
      Projection p;
      p.kind = kind;
      p.name = prefix + std::string(to_string(kind));
      p.weight = DenseWeight{gaussian(out, in, scale / std::sqrt(double(in)))};
      return p;
    };
    b.attn_norm = Matrix(1, d, 1.0);
    b.q = proj(ProjKind::kQ, d, d, 1.0);
    b.k = proj(ProjKind::kK, d, d, 1.0);
    b.v = proj(ProjKind::kV, d, d, 1.0);
    b.o = proj(ProjKind::kO, d, d, residual_scale);
    b.mlp_norm = Matrix(1, d, 1.0);
    b.gate = proj(ProjKind::kGate, f, d, 1.0);
    b.up = proj(ProjKind::kUp, f, d, 1.0);
    b.down = proj(ProjKind::kDown, d, f, residual_scale);
    m.blocks.push_back(std::move(b));
  }
  m.final_norm = Matrix(1, d, 1.0);
  // Small head keeps initial logits near uniform (loss ~ ln vocab).
  m.head = gaussian(config.vocab, d, 0.02 / std::sqrt(double(d)));
  return m;
}

std::vector<ParamRef> parameters(Model& model) {
  std::vector<ParamRef> out;
  out.push_back({"embed", &model.embed, ParamRole::kEmbedding, nullptr});
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    Block& b = model.blocks[l];
    const std::string prefix = "layers." + std::to_string(l) + ".";
    auto add_proj = [&out](Projection& p) {
      if (auto* d = std::get_if<DenseWeight>(&p.weight)) {
        out.push_back({p.name + ".weight", &d->w, ParamRole::kDense, &p});
      } else {
        auto& f = std::get<FactoredWeight>(p.weight);
        out.push_back({p.name + ".A", &f.a, ParamRole::kFactorA, &p});
        out.push_back({p.name + ".B", &f.b, ParamRole::kFactorB, &p});
      }
      if (p.lora) {
        out.push_back({p.name + ".lora_U", &p.lora->u, ParamRole::kLoraU, &p});
        out.push_back({p.name + ".lora_V", &p.lora->v, ParamRole::kLoraV, &p});
      }
    };
    out.push_back({prefix + "input_layernorm", &b.attn_norm, ParamRole::kNorm, nullptr});
    add_proj(b.q);
    add_proj(b.k);
    add_proj(b.v);
    add_proj(b.o);
    out.push_back({prefix + "post_attention_layernorm", &b.mlp_norm, ParamRole::kNorm, nullptr});
    add_proj(b.gate);
    add_proj(b.up);
    add_proj(b.down);
  }
  out.push_back({"norm", &model.final_norm, ParamRole::kNorm, nullptr});
  out.push_back({"lm_head", &model.head, ParamRole::kHead, nullptr});
  return out;
}

Model zeros_like(const Model& model, const ParamFilter& keep) {
  Model z = model;
  for (auto& ref : parameters(z)) {
    if (keep(ref))
      ref.value->fill(0.0);
    else
      *ref.value = Matrix();
  }
  return z;
}

Model densified(const Model& model) {
  Model d = model;
  for (auto* p : d.projections()) {
    if (p->is_factored() || p->lora) {
      Matrix w = p->materialize();
      p->weight = DenseWeight{std::move(w)};
      p->lora.reset();
    }
  }
  return d;
}

}  // namespace welore
