// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures and oracles for the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "welore/factorizer.hpp"
#include "welore/matrix.hpp"
#include "welore/model.hpp"
#include "welore/svd.hpp"
#include "welore/transformer.hpp"

namespace welore::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = dist(rng);
  return m;
}

// Symmetric positive definite n x n: G Gᵀ / n + small ridge.
inline Matrix random_spd(std::size_t n, std::mt19937_64& rng) {
  const Matrix g = random_matrix(n, 2 * n, rng);
  Matrix s = matmul_nt(g, g);
  for (double& x : s.data()) x /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) s(i, i) += 1e-3;
  return s;
}

inline ModelConfig micro_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 64;
  c.max_seq = 32;
  return c;
}

inline TokenBatch random_batch(std::uint64_t seed, std::size_t batch, std::size_t seq_len) {
  std::mt19937_64 rng(seed);
  TokenBatch b;
  for (std::size_t s = 0; s < batch; ++s) {
    std::vector<std::uint8_t> seq(seq_len + 1);
    for (auto& t : seq) t = static_cast<std::uint8_t>(rng() % 256);
    b.sequences.push_back(std::move(seq));
  }
  return b;
}

// Plain textbook pruning / Eckart-Young oracles.
inline double tail_oracle(const std::vector<double>& sigma, std::size_t rank) {
  double s = 0.0;
  for (std::size_t i = rank; i < sigma.size(); ++i) s += sigma[i] * sigma[i];
  return std::sqrt(s);
}

// Relative error ‖analytic − numeric‖ / ‖numeric‖ per tensor, with central
// differences on every entry (or `max_entries` evenly spaced ones).
struct GradCheck {
  std::map<std::string, double> rel_error;
  double worst = 0.0;
  std::string worst_name;
};

inline GradCheck gradient_check(Model model, const TokenBatch& batch,
                                std::size_t max_entries = 0, double h = 1e-5) {
  Model grads = zeros_like(model, [](const ParamRef&) { return true; });
  loss_and_grad(model, batch, grads);
  auto params = parameters(model);
  auto gparams = parameters(grads);
  GradCheck out;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix& w = *params[t].value;
    const Matrix& g = *gparams[t].value;
    const std::size_t n = w.size();
    const std::size_t stride = max_entries == 0 || n <= max_entries ? 1 : n / max_entries;
    double diff2 = 0.0, ref2 = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = w.data()[i];
      w.data()[i] = orig + h;
      const double up = loss(model, batch);
      w.data()[i] = orig - h;
      const double down = loss(model, batch);
      w.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double d = g.data()[i] - numeric;
      diff2 += d * d;
      ref2 += numeric * numeric;
    }
    const double rel = ref2 > 0.0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2);
    out.rel_error[params[t].name] = rel;
    if (rel > out.worst) {
      out.worst = rel;
      out.worst_name = params[t].name;
    }
  }
  return out;
}

// A micro model exercising every tensor kind: dense, factored A/B, LoRA U/V,
// norms (perturbed away from 1), embeddings and head.
inline Model all_kinds_micro_model(std::uint64_t seed) {
  Model m = init_model(micro_config(), seed);
  std::mt19937_64 rng(seed + 17);
  std::uniform_real_distribution<double> jitter(0.7, 1.3);
  for (auto& ref : parameters(m))
    if (ref.role == ParamRole::kNorm)
      for (double& x : ref.value->data()) x = jitter(rng);
  for (double& x : m.head.data()) x *= 25.0;  // make logits non-trivial

  Projection& q = m.blocks[0].q;
  LowRankFactors f = truncate(svd(q.materialize()), 5);
  q.weight = FactoredWeight{f.a, f.b};
  Projection& up = m.blocks[1].up;
  f = truncate(svd(up.materialize()), 6);
  up.weight = FactoredWeight{f.a, f.b};

  for (Projection* p : {&m.blocks[0].v, &m.blocks[1].up}) {
    LoraAdapter ad;
    ad.u = random_matrix(p->rows(), 3, rng, 0.2);
    ad.v = random_matrix(3, p->cols(), rng, 0.2);
    ad.scale = 2.0;
    p->lora = ad;
  }
  return m;
}

// Micro model whose projections have decaying spectra, so plans mix LRC/NLRC.
inline Model shaped_model(std::uint64_t seed) {
  Model m = init_model(micro_config(), seed);
  std::size_t idx = 0;
  for (auto* p : m.projections()) {
    const Matrix w = p->materialize();
    const SvdResult s = svd(w);
    Matrix us = s.u;
    const double decay = 0.1 + 0.15 * static_cast<double>(idx++ % 7);
    for (std::size_t k = 0; k < us.cols(); ++k)
      for (std::size_t i = 0; i < us.rows(); ++i)
        us(i, k) *= s.sigma[0] * std::exp(-decay * static_cast<double>(k));
    p->weight = DenseWeight{matmul(us, s.vt)};
  }
  return m;
}

}  // namespace welore::testing
