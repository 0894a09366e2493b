// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "welore/error.hpp"

namespace welore {

namespace {

// ---------------------------------------------------------------- linear

struct LinearCache {
  Matrix x;  // input, T x in
  Matrix h;  // x * B^T for factored weights
  Matrix z;  // x * V^T for adapters
};

Matrix linear_forward(const Projection& p, const Matrix& x, LinearCache* cache) {
  Matrix y;
  Matrix h;
  if (const auto* d = std::get_if<DenseWeight>(&p.weight)) {
    y = matmul_nt(x, d->w);
  } else {
    const auto& f = std::get<FactoredWeight>(p.weight);
    h = matmul_nt(x, f.b);
    y = matmul_nt(h, f.a);
  }
  Matrix z;
  if (p.lora) {
    z = matmul_nt(x, p.lora->v);
    Matrix zu = matmul_nt(z, p.lora->u);
    axpy(y, zu, p.lora->scale);
  }
  if (cache) {
    cache->x = x;
    cache->h = std::move(h);
    cache->z = std::move(z);
  }
  return y;
}

// Returns dL/dx; accumulates parameter gradients into the non-empty tensors
// of g.
Matrix linear_backward(const Projection& p, const LinearCache& c,
                       const Matrix& dy, Projection& g) {
  Matrix dx;
  if (const auto* d = std::get_if<DenseWeight>(&p.weight)) {
    auto& gw = std::get<DenseWeight>(g.weight).w;
    if (!gw.empty()) add_matmul_tn(gw, dy, c.x);
    dx = matmul(dy, d->w);
  } else {
    const auto& f = std::get<FactoredWeight>(p.weight);
    auto& gf = std::get<FactoredWeight>(g.weight);
    if (!gf.a.empty()) add_matmul_tn(gf.a, dy, c.h);
    const Matrix dh = matmul(dy, f.a);
    if (!gf.b.empty()) add_matmul_tn(gf.b, dh, c.x);
    dx = matmul(dh, f.b);
  }
  if (p.lora) {
    const double s = p.lora->scale;
    auto& gl = *g.lora;
    if (!gl.u.empty()) add_matmul_tn(gl.u, dy, c.z, s);
    Matrix dz = matmul(dy, p.lora->u);
    for (double& x : dz.data()) x *= s;
    if (!gl.v.empty()) add_matmul_tn(gl.v, dz, c.x);
    add_matmul(dx, dz, p.lora->v);
  }
  return dx;
}

// ---------------------------------------------------------------- rmsnorm

Matrix rmsnorm_forward(const Matrix& x, const Matrix& gain, double eps,
                       std::vector<double>* inv_rms) {
  const std::size_t t_len = x.rows(), d = x.cols();
  Matrix y(t_len, d);
  if (inv_rms) inv_rms->resize(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto xr = x.row(t);
    const double ms = dot(xr, xr) / static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(ms + eps);
    if (inv_rms) (*inv_rms)[t] = inv;
    auto yr = y.row(t);
    for (std::size_t j = 0; j < d; ++j) yr[j] = xr[j] * inv * gain(0, j);
  }
  return y;
}

Matrix rmsnorm_backward(const Matrix& x, const Matrix& gain,
                        const std::vector<double>& inv_rms, const Matrix& dy,
                        Matrix& dgain) {
  const std::size_t t_len = x.rows(), d = x.cols();
  Matrix dx(t_len, d);
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto xr = x.row(t);
    const auto dyr = dy.row(t);
    const double inv = inv_rms[t];
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += gain(0, j) * dyr[j] * xr[j];
    if (!dgain.empty())
      for (std::size_t j = 0; j < d; ++j) dgain(0, j) += dyr[j] * xr[j] * inv;
    const double coef = inv * inv * inv * s / static_cast<double>(d);
    auto dxr = dx.row(t);
    for (std::size_t j = 0; j < d; ++j)
      dxr[j] = inv * gain(0, j) * dyr[j] - coef * xr[j];
  }
  return dx;
}

// ---------------------------------------------------------------- rotary

struct RopeTable {
  Matrix cos;  // T x hd/2
  Matrix sin;
};

RopeTable rope_table(std::size_t t_len, std::size_t head_dim, double base) {
  const std::size_t half = head_dim / 2;
  RopeTable tab{Matrix(t_len, half), Matrix(t_len, half)};
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
    for (std::size_t t = 0; t < t_len; ++t) {
      const double ang = static_cast<double>(t) * freq;
      tab.cos(t, i) = std::cos(ang);
      tab.sin(t, i) = std::sin(ang);
    }
  }
  return tab;
}

// Rotates each head's (2i, 2i+1) pairs by +angle (inverse = true: -angle).
void apply_rope(Matrix& x, std::size_t n_heads, const RopeTable& tab,
                bool inverse) {
  const std::size_t hd = x.cols() / n_heads, half = hd / 2;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto xr = x.row(t);
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t i = 0; i < half; ++i) {
        const double c = tab.cos(t, i);
        const double s = inverse ? -tab.sin(t, i) : tab.sin(t, i);
        double& a = xr[h * hd + 2 * i];
        double& b = xr[h * hd + 2 * i + 1];
        const double a0 = a, b0 = b;
        a = a0 * c - b0 * s;
        b = a0 * s + b0 * c;
      }
    }
  }
}

// ---------------------------------------------------------------- attention

// Causal multi-head attention on already-rotated q, k. probs receives one
// T x T matrix per head.
Matrix attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                         std::size_t n_heads, std::vector<Matrix>* probs) {
  const std::size_t t_len = q.rows(), d = q.cols(), hd = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Matrix out(t_len, d);
  if (probs) probs->assign(n_heads, Matrix());
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * hd;
    Matrix p(t_len, t_len);
    for (std::size_t i = 0; i < t_len; ++i) {
      const double* qi = q.row(i).data() + off;
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* kj = k.row(j).data() + off;
        double s = 0.0;
        for (std::size_t e = 0; e < hd; ++e) s += qi[e] * kj[e];
        p(i, j) = s * scale;
        mx = std::max(mx, p(i, j));
      }
      double z = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        p(i, j) = std::exp(p(i, j) - mx);
        z += p(i, j);
      }
      double* oi = out.row(i).data() + off;
      for (std::size_t j = 0; j <= i; ++j) {
        p(i, j) /= z;
        const double* vj = v.row(j).data() + off;
        const double w = p(i, j);
        for (std::size_t e = 0; e < hd; ++e) oi[e] += w * vj[e];
      }
    }
    if (probs) (*probs)[h] = std::move(p);
  }
  return out;
}

void attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                        const std::vector<Matrix>& probs, const Matrix& dout,
                        Matrix& dq, Matrix& dk, Matrix& dv) {
  const std::size_t t_len = q.rows(), d = q.cols();
  const std::size_t n_heads = probs.size(), hd = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  dq = Matrix(t_len, d);
  dk = Matrix(t_len, d);
  dv = Matrix(t_len, d);
  std::vector<double> dp(t_len);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * hd;
    const Matrix& p = probs[h];
    for (std::size_t i = 0; i < t_len; ++i) {
      const double* doi = dout.row(i).data() + off;
      double row_sum = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* vj = v.row(j).data() + off;
        double s = 0.0;
        for (std::size_t e = 0; e < hd; ++e) s += doi[e] * vj[e];
        dp[j] = s;
        row_sum += p(i, j) * s;
        double* dvj = dv.row(j).data() + off;
        const double w = p(i, j);
        for (std::size_t e = 0; e < hd; ++e) dvj[e] += w * doi[e];
      }
      const double* qi = q.row(i).data() + off;
      double* dqi = dq.row(i).data() + off;
      for (std::size_t j = 0; j <= i; ++j) {
        const double ds = p(i, j) * (dp[j] - row_sum) * scale;
        if (ds == 0.0) continue;
        const double* kj = k.row(j).data() + off;
        double* dkj = dk.row(j).data() + off;
        for (std::size_t e = 0; e < hd; ++e) {
          dqi[e] += ds * kj[e];
          dkj[e] += ds * qi[e];
        }
      }
    }
  }
}

// ---------------------------------------------------------------- block

double silu(double x) { return x / (1.0 + std::exp(-x)); }
double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

struct BlockCache {
  Matrix x_in;
  std::vector<double> inv_rms1;
  LinearCache cq, ck, cv, co;
  Matrix q, k, v;  // q and k after rotation
  std::vector<Matrix> probs;
  Matrix x_mid;
  std::vector<double> inv_rms2;
  LinearCache cgate, cup, cdown;
  Matrix gate, up;
};

Matrix block_forward(const Block& b, const ModelConfig& cfg, const RopeTable& rope,
                     const Matrix& x, BlockCache* c) {
  std::vector<double> inv1, inv2;
  const Matrix h1 = rmsnorm_forward(x, b.attn_norm, cfg.norm_eps, &inv1);
  Matrix q = linear_forward(b.q, h1, c ? &c->cq : nullptr);
  Matrix k = linear_forward(b.k, h1, c ? &c->ck : nullptr);
  Matrix v = linear_forward(b.v, h1, c ? &c->cv : nullptr);
  apply_rope(q, cfg.n_heads, rope, false);
  apply_rope(k, cfg.n_heads, rope, false);
  std::vector<Matrix> probs;
  const Matrix att = attention_forward(q, k, v, cfg.n_heads, c ? &probs : nullptr);
  Matrix x_mid = x + linear_forward(b.o, att, c ? &c->co : nullptr);

  const Matrix h2 = rmsnorm_forward(x_mid, b.mlp_norm, cfg.norm_eps, &inv2);
  Matrix g = linear_forward(b.gate, h2, c ? &c->cgate : nullptr);
  Matrix u = linear_forward(b.up, h2, c ? &c->cup : nullptr);
  Matrix act(g.rows(), g.cols());
  for (std::size_t i = 0; i < act.size(); ++i)
    act.data()[i] = silu(g.data()[i]) * u.data()[i];
  Matrix x_out = x_mid + linear_forward(b.down, act, c ? &c->cdown : nullptr);

  if (c) {
    c->x_in = x;
    c->inv_rms1 = std::move(inv1);
    c->q = std::move(q);
    c->k = std::move(k);
    c->v = std::move(v);
    c->probs = std::move(probs);
    c->x_mid = std::move(x_mid);
    c->inv_rms2 = std::move(inv2);
    c->gate = std::move(g);
    c->up = std::move(u);
  }
  return x_out;
}

Matrix block_backward(const Block& b, const ModelConfig& cfg, const RopeTable& rope,
                      const BlockCache& c, const Matrix& dx_out, Block& g) {
  // MLP branch.
  const Matrix dact = linear_backward(b.down, c.cdown, dx_out, g.down);
  Matrix dgate(dact.rows(), dact.cols()), dup(dact.rows(), dact.cols());
  for (std::size_t i = 0; i < dact.size(); ++i) {
    const double gv = c.gate.data()[i];
    dup.data()[i] = dact.data()[i] * silu(gv);
    dgate.data()[i] = dact.data()[i] * c.up.data()[i] * silu_grad(gv);
  }
  Matrix dh2 = linear_backward(b.gate, c.cgate, dgate, g.gate);
  axpy(dh2, linear_backward(b.up, c.cup, dup, g.up));
  Matrix dx_mid = dx_out;
  axpy(dx_mid, rmsnorm_backward(c.x_mid, b.mlp_norm, c.inv_rms2, dh2, g.mlp_norm));

  // Attention branch.
  const Matrix datt = linear_backward(b.o, c.co, dx_mid, g.o);
  Matrix dq, dk, dv;
  attention_backward(c.q, c.k, c.v, c.probs, datt, dq, dk, dv);
  apply_rope(dq, cfg.n_heads, rope, true);
  apply_rope(dk, cfg.n_heads, rope, true);
  Matrix dh1 = linear_backward(b.q, c.cq, dq, g.q);
  axpy(dh1, linear_backward(b.k, c.ck, dk, g.k));
  axpy(dh1, linear_backward(b.v, c.cv, dv, g.v));
  Matrix dx = dx_mid;
  axpy(dx, rmsnorm_backward(c.x_in, b.attn_norm, c.inv_rms1, dh1, g.attn_norm));
  return dx;
}

void check_tokens(const Model& model, std::size_t len) {
  if (len > model.config.max_seq) {
    std::ostringstream os;
    os << "sequence length " << len << " exceeds max_seq "
       << model.config.max_seq;
    throw Error(ErrorCode::kRange, os.str());
  }
  if (len == 0) throw Error(ErrorCode::kInvalidArgument, "empty sequence");
}

Matrix embed_tokens(const Model& model, std::span<const std::uint8_t> tokens) {
  const std::size_t d = model.config.d_model;
  Matrix x(tokens.size(), d);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= model.config.vocab)
      throw Error(ErrorCode::kRange, "token id outside vocabulary");
    const auto e = model.embed.row(tokens[t]);
    std::copy(e.begin(), e.end(), x.row(t).begin());
  }
  return x;
}

// Cross-entropy of each row against targets; optionally writes the softmax
// minus one-hot, scaled by `scale`, into dlogits.
double cross_entropy(const Matrix& lg, std::span<const std::uint8_t> targets,
                     Matrix* dlogits, double scale) {
  double total = 0.0;
  for (std::size_t t = 0; t < lg.rows(); ++t) {
    const auto r = lg.row(t);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    total += lse - r[targets[t]];
    if (dlogits) {
      auto dr = dlogits->row(t);
      for (std::size_t j = 0; j < r.size(); ++j)
        dr[j] = std::exp(r[j] - lse) * scale;
      dr[targets[t]] -= scale;
    }
  }
  return total;
}

}  // namespace

std::size_t TokenBatch::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.empty() ? 0 : s.size() - 1;
  return n;
}

Matrix logits(const Model& model, std::span<const std::uint8_t> tokens) {
  check_tokens(model, tokens.size());
  const auto& cfg = model.config;
  const RopeTable rope = rope_table(tokens.size(), cfg.head_dim(), cfg.rope_base);
  Matrix x = embed_tokens(model, tokens);
  for (const auto& b : model.blocks) x = block_forward(b, cfg, rope, x, nullptr);
  const Matrix hf = rmsnorm_forward(x, model.final_norm, cfg.norm_eps, nullptr);
  return matmul_nt(hf, model.head);
}

Matrix attention_probabilities(const Model& model,
                               std::span<const std::uint8_t> tokens,
                               std::size_t block, std::size_t head) {
  check_tokens(model, tokens.size());
  const auto& cfg = model.config;
  if (block >= model.blocks.size() || head >= cfg.n_heads)
    throw Error(ErrorCode::kRange, "attention_probabilities: bad block/head");
  const RopeTable rope = rope_table(tokens.size(), cfg.head_dim(), cfg.rope_base);
  Matrix x = embed_tokens(model, tokens);
  for (std::size_t l = 0; l < block; ++l)
    x = block_forward(model.blocks[l], cfg, rope, x, nullptr);
  BlockCache c;
  block_forward(model.blocks[block], cfg, rope, x, &c);
  return c.probs[head];
}

double loss(const Model& model, const TokenBatch& batch) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& seq : batch.sequences) {
    if (seq.size() < 2) continue;
    const std::span<const std::uint8_t> all(seq);
    const Matrix lg = logits(model, all.first(seq.size() - 1));
    total += cross_entropy(lg, all.subspan(1), nullptr, 0.0);
    count += seq.size() - 1;
  }
  if (count == 0) throw Error(ErrorCode::kInvalidArgument, "loss: empty batch");
  return total / static_cast<double>(count);
}

double loss_and_grad(const Model& model, const TokenBatch& batch, Model& grads) {
  const auto& cfg = model.config;
  const std::size_t count = batch.token_count();
  if (count == 0)
    throw Error(ErrorCode::kInvalidArgument, "loss_and_grad: empty batch");
  const double scale = 1.0 / static_cast<double>(count);
  double total = 0.0;

  for (const auto& seq : batch.sequences) {
    if (seq.size() < 2) continue;
    const std::span<const std::uint8_t> all(seq);
    const auto inputs = all.first(seq.size() - 1);
    const auto targets = all.subspan(1);
    check_tokens(model, inputs.size());
    const RopeTable rope = rope_table(inputs.size(), cfg.head_dim(), cfg.rope_base);

    Matrix x = embed_tokens(model, inputs);
    std::vector<BlockCache> caches(model.blocks.size());
    for (std::size_t l = 0; l < model.blocks.size(); ++l)
      x = block_forward(model.blocks[l], cfg, rope, x, &caches[l]);
    std::vector<double> inv_f;
    const Matrix hf = rmsnorm_forward(x, model.final_norm, cfg.norm_eps, &inv_f);
    const Matrix lg = matmul_nt(hf, model.head);
    Matrix dlg(lg.rows(), lg.cols());
    total += cross_entropy(lg, targets, &dlg, scale);

    if (!grads.head.empty()) add_matmul_tn(grads.head, dlg, hf);
    const Matrix dhf = matmul(dlg, model.head);
    Matrix dx = rmsnorm_backward(x, model.final_norm, inv_f, dhf, grads.final_norm);
    for (std::size_t l = model.blocks.size(); l-- > 0;)
      dx = block_backward(model.blocks[l], cfg, rope, caches[l], dx, grads.blocks[l]);
    if (!grads.embed.empty()) {
      for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto ge = grads.embed.row(inputs[t]);
        const auto dr = dx.row(t);
        for (std::size_t j = 0; j < ge.size(); ++j) ge[j] += dr[j];
      }
    }
  }
  return total * scale;
}

ActivationStatsMap collect_activation_stats(const Model& model, const TokenBatch& batch) {
  const auto& cfg = model.config;
  ActivationStatsMap stats;
  for (const auto* p : model.projections()) stats[p->name].layer = p->name;
  for (const auto& seq : batch.sequences) {
    if (seq.size() < 2) continue;
    const std::span<const std::uint8_t> inputs(seq.data(), seq.size() - 1);
    check_tokens(model, inputs.size());
    const RopeTable rope = rope_table(inputs.size(), cfg.head_dim(), cfg.rope_base);
    Matrix x = embed_tokens(model, inputs);
    for (const auto& b : model.blocks) {
      BlockCache c;
      x = block_forward(b, cfg, rope, x, &c);
      stats[b.q.name].accumulate(c.cq.x);
      stats[b.k.name].accumulate(c.ck.x);
      stats[b.v.name].accumulate(c.cv.x);
      stats[b.o.name].accumulate(c.co.x);
      stats[b.gate.name].accumulate(c.cgate.x);
      stats[b.up.name].accumulate(c.cup.x);
      stats[b.down.name].accumulate(c.cdown.x);
    }
  }
  return stats;
}

}  // namespace welore
