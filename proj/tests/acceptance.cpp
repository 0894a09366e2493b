// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "support.hpp"
#include "welore/checkpoint.hpp"
#include "welore/dynamics.hpp"
#include "welore/error.hpp"
#include "welore/factorizer.hpp"
#include "welore/train.hpp"

using namespace welore;
using namespace welore::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// Shared toy pipeline state: pretrained model, corpora, checkpoint directory.
struct Pipeline {
  std::filesystem::path work;
  Corpus pretrain_corpus, pretrain_eval, finetune_corpus, finetune_eval;
  ModelConfig config;
  TrainConfig pretrain;
  Model pretrained;
  std::vector<StepRecord> pretrain_log;
  RankPlan plan50;
  Model compressed50;  // default accounting: N-LRCs dense
  bool ready = false;
};

Pipeline& pipeline() {
  static Pipeline p;
  if (p.ready) return p;
  p.work = std::filesystem::temp_directory_path() / "welore_acceptance";
  std::filesystem::remove_all(p.work);
  std::filesystem::create_directories(p.work);
  p.pretrain_corpus = Corpus::from_text(synthetic_text(1200000, 1, CorpusStyle::kProse));
  p.pretrain_eval = Corpus::from_text(synthetic_text(65536, 2, CorpusStyle::kProse));
  p.finetune_corpus = Corpus::from_text(synthetic_text(200000, 3, CorpusStyle::kRecords));
  p.finetune_eval = Corpus::from_text(synthetic_text(65536, 4, CorpusStyle::kRecords));

  p.config.max_seq = 64;  // d_model 64, 4 blocks, 4 heads, d_ff 256
  p.pretrain.steps = 2000;
  p.pretrain.batch = 4;
  p.pretrain.seq_len = 64;
  p.pretrain.lr = 3e-3;
  p.pretrain.min_lr_ratio = 0.1;
  p.pretrain.seed = 7;
  p.pretrain.checkpoint_every = 100;  // 5% of training
  p.pretrain.out_dir = p.work / "pretrain";
  p.pretrain.eval_tokens = 4096;
  const TrainRun run = train(init_model(p.config, 7), p.pretrain_corpus, p.pretrain);
  p.pretrained = run.model;
  p.pretrain_log = run.log;

  p.plan50 = search_threshold(analyze_model(p.pretrained), {0.5, 0.01, 0.005});
  p.compressed50 = compress(p.pretrained, p.plan50).model;
  p.ready = true;
  return p;
}

double eval_loss(const Model& m, const Corpus& c) {
  return std::log(perplexity(m, c, m.config.max_seq, 8192));
}

// ---------------------------------------------------------------------------

Outcome threshold_search_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> n_layers(2, 12);
  std::uniform_int_distribution<std::size_t> len(3, 300);
  std::uniform_real_distribution<double> alpha(0.05, 3.0);
  std::size_t cases = 0, k_match = 0, in_band = 0, admitted = 0, flag_ok = 0, unreachable = 0,
              unreachable_ok = 0;
  for (int suite = 0; suite < 20; ++suite) {
    std::vector<std::vector<double>> spectra;
    std::vector<SpectrumReport> reports;
    const std::size_t layers = n_layers(rng);
    for (std::size_t l = 0; l < layers; ++l) {
      spectra.push_back(synthetic_spectrum(len(rng), alpha(rng), rng));
      reports.push_back(normalize_spectrum(spectra.back(), "l" + std::to_string(l)));
    }
    for (int t = 1; t <= 7; ++t) {
      const double target = 0.1 * t;
      const GridOracle o = brute_force_grid(spectra, target, 0.01, 0.005);
      ++cases;
      if (o.max_err < target - 0.01) {
        ++unreachable;
        try {
          search_threshold(reports, {target, 0.01, 0.005});
        } catch (const Error& e) {
          if (e.code() == ErrorCode::kUnreachable) ++unreachable_ok;
        }
        continue;
      }
      const RankPlan p = search_threshold(reports, {target, 0.01, 0.005});
      if (p.threshold_k == (o.k ? *o.k : o.closest_k)) ++k_match;
      if (p.exact == o.k.has_value()) ++flag_ok;
      if (o.k) {
        ++admitted;
        if (std::abs(p.achieved_err - target) <= 0.01) ++in_band;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::size_t reachable = cases - unreachable;
  Outcome out;
  out.pass = k_match == reachable && flag_ok == reachable && in_band == admitted &&
             unreachable_ok == unreachable && secs < 60.0;
  out.detail = fmt("%zu cases: k matches oracle %zu/%zu, in band %zu/%zu admitted, "
                   "unreachable %zu (reported %zu), %.2fs",
                   cases, k_match, reachable, in_band, admitted, unreachable, unreachable_ok, secs);
  return out;
}

Outcome eckart_young_suite() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> dim(1, 128);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t checks = 0, tail_ok = 0, beaten = 0, competitors = 0;
  double worst_rel = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = trial < 3 ? 128 : dim(rng), n = trial < 3 ? 128 : dim(rng);
    const Matrix w = random_matrix(m, n, rng);
    const SvdResult s = svd(w);
    const double norm = frobenius_norm(w);
    for (std::size_t r = 1; r <= s.sigma.size(); ++r) {
      const LowRankFactors f = truncate(s, r);
      const double err = frobenius_error(w, f.a, f.b);
      const double tail = tail_oracle(s.sigma, r);
      const double dev = std::abs(err - tail);
      ++checks;
      // 1e-8 relative; a 1e-12 * ||W|| floor covers rank = full where the tail is 0.
      if (dev <= 1e-8 * tail + 1e-12 * norm) ++tail_ok;
      if (tail > 0.0) worst_rel = std::max(worst_rel, dev / tail);

      // 100 competitors: optimally scaled random products and perturbed optima.
      bool all = true;
      for (int c = 0; c < 100; ++c) {
        Matrix a, b;
        if (c % 2 == 0) {
          a = random_matrix(m, r, rng);
          b = random_matrix(r, n, rng);
        } else {
          const double eps = std::pow(10.0, -1.0 - (c % 10) / 2.0);
          a = f.a;
          b = f.b;
          for (double& x : a.data()) x += eps * gauss(rng);
          for (double& x : b.data()) x += eps * gauss(rng);
        }
        Matrix p = matmul(a, b);
        const double pp = dot(p, p);
        if (c % 2 == 0 && pp > 0.0) {
          const double alpha = dot(w, p) / pp;
          for (double& x : p.data()) x *= alpha;
        }
        const double competitor = frobenius_norm(w - p);
        ++competitors;
        if (!(err <= competitor)) all = false;
      }
      if (all) ++beaten;
    }
  }
  Outcome out;
  out.pass = tail_ok == checks && beaten == checks;
  out.detail = fmt("%zu (matrix, rank) pairs: tail match %zu, beats all 100 competitors %zu "
                   "(%zu competitors), worst relative deviation %.2e",
                   checks, tail_ok, beaten, competitors, worst_rel);
  return out;
}

Outcome allocation_dominance() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> dim(8, 48);
  std::uniform_real_distribution<double> alpha(0.1, 2.0);
  std::uniform_real_distribution<double> target(0.2, 0.6);
  std::size_t models = 0, dominated = 0, strict = 0, skipped = 0;
  double worst_gap = 1e300;
  while (models < 50) {
    std::vector<SpectrumReport> reports;
    for (int l = 0; l < 5; ++l) {
      const std::size_t m = dim(rng), n = dim(rng), p = std::min(m, n);
      const Matrix u = svd(random_matrix(m, p, rng)).u;
      const Matrix vt = svd(random_matrix(p, n, rng)).vt;
      const auto sigma = synthetic_spectrum(p, alpha(rng), rng);
      Matrix us = u;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < p; ++k) us(i, k) *= 3.0 * sigma[k];
      reports.push_back(analyze(matmul(us, vt), "layers." + std::to_string(l)));
    }
    RankPlan plan;
    try {
      plan = search_threshold(reports, {target(rng), 0.05, 0.005});
    } catch (const Error&) {
      ++skipped;
      continue;
    }
    ++models;
    std::vector<std::vector<double>> spectra;
    std::vector<std::size_t> ranks, full;
    std::size_t kept = 0;
    for (std::size_t l = 0; l < reports.size(); ++l) {
      spectra.push_back(reports[l].values);
      ranks.push_back(plan.entries[l].rank);
      full.push_back(plan.entries[l].full_rank);
      kept += plan.entries[l].rank;
    }
    const auto uniform = uniform_ranks(full, kept);
    const double ours = discarded_energy(spectra, ranks);
    const double theirs = discarded_energy(spectra, uniform);
    if (ours <= theirs) ++dominated;
    if (ours < theirs) ++strict;
    worst_gap = std::min(worst_gap, theirs - ours);
  }
  Outcome out;
  out.pass = dominated == models;
  out.detail = fmt("%zu models: global threshold <= uniform in %zu (strictly less in %zu), "
                   "smallest margin %.3e, %zu unreachable draws redrawn",
                   models, dominated, strict, worst_gap, skipped);
  return out;
}

Outcome gradient_exactness() {
  const Model m = all_kinds_micro_model(404);
  const GradCheck gc = gradient_check(m, random_batch(405, 2, 8), 0);
  std::set<std::string> kinds;
  for (const auto& [name, rel] : gc.rel_error) {
    if (name == "embed") kinds.insert("embedding");
    else if (name == "lm_head") kinds.insert("head");
    else if (name.ends_with("layernorm") || name == "norm") kinds.insert("norm");
    else if (name.ends_with(".A")) kinds.insert("factor_A");
    else if (name.ends_with(".B")) kinds.insert("factor_B");
    else if (name.ends_with(".lora_U")) kinds.insert("lora_U");
    else if (name.ends_with(".lora_V")) kinds.insert("lora_V");
    else if (name.ends_with(".weight")) kinds.insert("dense");
  }
  Outcome out;
  out.pass = gc.worst <= 1e-4 && kinds.size() == 8;
  out.detail = fmt("%zu tensors over %zu kinds, every entry checked; worst relative error %.2e (%s)",
                   gc.rel_error.size(), kinds.size(), gc.worst, gc.worst_name.c_str());
  return out;
}

std::size_t serialized_elements(const std::vector<std::uint8_t>& bytes, LayerClass cls) {
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | bytes[8 + i];
  const auto meta = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  std::size_t n = 0;
  for (const auto& t : meta.at("tensors")) {
    if (t.value("class", std::string()) != to_string(cls)) continue;
    const std::size_t rows = t.at("shape")[0], cols = t.at("shape")[1];
    n += t.at("kind") == "factored" ? t.at("rank").get<std::size_t>() * (rows + cols) : rows * cols;
  }
  return n;
}

Outcome freezing_and_accounting() {
  Pipeline& p = pipeline();
  const Model& start = p.compressed50;
  TrainConfig c;
  c.steps = 100;
  c.batch = 4;
  c.seq_len = 64;
  c.lr = 1e-3;
  c.eval_tokens = 1024;
  FinetuneMode lrc;
  lrc.kind = FinetuneMode::Kind::kLrcOnly;
  const TrainRun run = finetune(start, p.finetune_corpus, lrc, c);

  std::size_t frozen = 0, frozen_identical = 0, lrc_formula = 0, nlrc_formula = 0, lrc_moved = 0,
              lrc_layers = 0;
  for (const auto* proj : start.projections()) {
    const Projection& after = *run.model.find_projection(proj->name);
    if (proj->cls == LayerClass::kNLRC) {
      ++frozen;
      const bool same = std::get<DenseWeight>(after.weight).w == std::get<DenseWeight>(proj->weight).w;
      if (same) ++frozen_identical;
      nlrc_formula += proj->rows() * proj->cols();
    } else {
      ++lrc_layers;
      lrc_formula += proj->rank() * (proj->rows() + proj->cols());
      if (after.materialize() != proj->materialize()) ++lrc_moved;
    }
  }
  const bool others_frozen = run.model.embed == start.embed && run.model.head == start.head &&
                             run.model.final_norm == start.final_norm;
  const auto bytes = save(start);
  const std::size_t lrc_serial = serialized_elements(bytes, LayerClass::kLRC);
  const std::size_t nlrc_serial = serialized_elements(bytes, LayerClass::kNLRC);

  FinetuneMode nlrc;
  nlrc.kind = FinetuneMode::Kind::kNlrcOnly;
  TrainConfig one = c;
  one.steps = 1;
  const TrainRun nrun = finetune(start, p.finetune_corpus, nlrc, one);
  FinetuneMode full;
  const TrainRun frun = finetune(start, p.finetune_corpus, full, one);

  Outcome out;
  out.pass = frozen > 0 && lrc_layers > 0 && frozen_identical == frozen && others_frozen &&
             lrc_moved == lrc_layers && run.optimizer_state_elements == 2 * run.trainable_params &&
             nrun.optimizer_state_elements == 2 * nrun.trainable_params &&
             frun.optimizer_state_elements == 2 * frun.trainable_params &&
             run.trainable_params == lrc_formula && lrc_formula == lrc_serial &&
             nrun.trainable_params == nlrc_formula && nlrc_formula == nlrc_serial;
  out.detail = fmt("%zu/%zu N-LRCs bit-identical after 100 steps; trainable LRC %zu = sum r(m+n) %zu "
                   "= serialized %zu; N-LRC %zu = sum mn %zu = serialized %zu; Adam state 2x "
                   "trainable; LRC/N-LRC trainable ratio %.2f, LRC/full %.2f",
                   frozen_identical, frozen, run.trainable_params, lrc_formula, lrc_serial,
                   nrun.trainable_params, nlrc_formula, nlrc_serial,
                   static_cast<double>(lrc_formula) / static_cast<double>(nlrc_formula),
                   static_cast<double>(run.trainable_params) / static_cast<double>(frun.trainable_params));
  return out;
}

Outcome compression_perplexity_trend() {
  Pipeline& p = pipeline();
  const double base = perplexity(p.pretrained, p.pretrain_eval, 64, 8192);
  const auto spectra = analyze_model(p.pretrained);

  // ERR 0: full-rank plan through compress, and every projection replaced
  // by its full-rank factors.
  const RankPlan zero = plan_for_threshold(spectra, 0.0);
  const double ppl_zero = perplexity(compress(p.pretrained, zero).model, p.pretrain_eval, 64, 8192);
  Model factored = p.pretrained;
  for (auto* proj : factored.projections()) {
    LowRankFactors f = truncate(svd(proj->materialize()), proj->full_rank());
    proj->weight = FactoredWeight{f.a, f.b};
  }
  const double ppl_factored = perplexity(factored, p.pretrain_eval, 64, 8192);
  const double zero_dev = std::max(std::abs(ppl_zero - base), std::abs(ppl_factored - base)) / base;

  std::string trend;
  std::vector<double> strict_ppl, default_ppl;
  for (double err : {0.1, 0.3, 0.5}) {
    const RankPlan plan = search_threshold(spectra, {err, 0.01, 0.005});
    strict_ppl.push_back(perplexity(compress(p.pretrained, plan, {true}).model, p.pretrain_eval, 64, 8192));
    default_ppl.push_back(perplexity(compress(p.pretrained, plan).model, p.pretrain_eval, 64, 8192));
    trend += fmt(" ERR %.1f (k=%.3f, achieved %.3f): %.4f [N-LRC dense %.4f];", err,
                 plan.threshold_k, plan.achieved_err, strict_ppl.back(), default_ppl.back());
  }
  const bool monotone = base <= strict_ppl[0] && strict_ppl[0] <= strict_ppl[1] &&
                        strict_ppl[1] <= strict_ppl[2];
  Outcome out;
  out.pass = monotone && zero_dev < 1e-4 && p.pretrain.steps >= 2000 &&
             p.pretrain_corpus.bytes.size() >= 1000000;
  out.detail = fmt("pretrain %zu steps on %zu bytes, loss %.3f -> %.3f; dense ppl %.4f; ERR 0 "
                   "relative change %.1e;",
                   p.pretrain.steps, p.pretrain_corpus.bytes.size(), p.pretrain_log.front().loss,
                   p.pretrain_log.back().loss, base, zero_dev) +
               trend;
  return out;
}

Outcome lrc_beats_nlrc() {
  Pipeline& p = pipeline();
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig c;
    c.steps = 500;
    c.batch = 4;
    c.seq_len = 64;
    c.lr = 1e-3;
    c.seed = seed;
    c.eval_tokens = 1024;
    FinetuneMode lrc, nlrc;
    lrc.kind = FinetuneMode::Kind::kLrcOnly;
    nlrc.kind = FinetuneMode::Kind::kNlrcOnly;
    const TrainRun a = finetune(p.compressed50, p.finetune_corpus, lrc, c);
    const TrainRun b = finetune(p.compressed50, p.finetune_corpus, nlrc, c);
    const double la = eval_loss(a.model, p.finetune_eval);
    const double lb = eval_loss(b.model, p.finetune_eval);
    if (la <= lb) ++wins;
    detail += fmt(" seed %llu: %.4f vs %.4f;", static_cast<unsigned long long>(seed), la, lb);
  }
  const double start = eval_loss(p.compressed50, p.finetune_eval);
  Outcome out;
  out.pass = wins >= 4;
  out.detail = fmt("held-out loss after 500 steps, LRC-only vs N-LRC-only (start %.4f), LRC wins "
                   "%zu/5:",
                   start, wins) +
               detail;
  return out;
}

Outcome whitened_dominance() {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<std::size_t> dim(2, 24);
  std::size_t wins = 0, nondegenerate = 0;
  double worst = -1.0, mean_gain = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = dim(rng), n = dim(rng);
    std::uniform_int_distribution<std::size_t> rank(1, std::min(m, n));
    const std::size_t r = rank(rng);
    const Matrix w = random_matrix(m, n, rng);
    // Anisotropic SPD second moment from correlated samples.
    Matrix x = random_matrix(4 * n, n, rng);
    for (std::size_t j = 0; j < n; ++j) {
      const double scale = std::exp(2.0 * (static_cast<double>(j) / static_cast<double>(n) - 0.5));
      for (std::size_t i = 0; i < x.rows(); ++i) x(i, j) *= scale;
    }
    ActivationStats st;
    st.accumulate(x);
    const LowRankFactors plain = truncate(svd(w), r);
    const LowRankFactors white = whitened_truncate(w, st.second_moment, r);
    const double ep = activation_error(w, plain.a, plain.b, st.second_moment);
    const double ew = activation_error(w, white.a, white.b, st.second_moment);
    // Rounding slack only, scaled by ||W S|| so that full-rank cases (both
    // errors at round-off level) compare fairly.
    const double scale = activation_error(w, Matrix(m, 1), Matrix(1, n), st.second_moment);
    if (ew <= ep * (1.0 + 1e-12) + 1e-12 * scale) ++wins;
    if (ep > 1e-9 * scale) {
      ++nondegenerate;
      worst = std::max(worst, (ew - ep) / ep);
      mean_gain += (ep - ew) / ep;
    }
  }
  Outcome out;
  out.pass = wins == 100;
  out.detail = fmt("100 random (W, SPD) pairs: whitened <= plain in %zu; over %zu non-full-rank "
                   "pairs mean relative reduction %.1f%%, smallest reduction %.2e",
                   wins, nondegenerate, 100.0 * mean_gain / static_cast<double>(nondegenerate), -worst);
  return out;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Outcome dynamics_invariants() {
  Pipeline& p = pipeline();
  const auto refs = run_checkpoints(p.pretrain.out_dir, p.pretrain.checkpoint_every, p.pretrain.steps);
  ProbeOptions probe;
  probe.seed = 99;
  const DynamicsTrace a = capture(refs, p.pretrain_corpus, probe, ".*");
  const DynamicsTrace b = capture(refs, p.pretrain_corpus, probe, ".*");
  std::size_t symmetric = 0, unit_diag = 0, in_range = 0, rows_ok = 0, rows = 0;
  bool grads_equal = true;
  for (const auto& layer : a.layers) {
    const Matrix c = cosine_matrix(a, layer);
    bool sym = true, diag = true, range = true;
    for (std::size_t i = 0; i < c.rows(); ++i) {
      diag &= c(i, i) == 1.0;
      for (std::size_t j = 0; j < c.cols(); ++j) {
        sym &= std::abs(c(i, j) - c(j, i)) <= 1e-12;
        range &= c(i, j) >= -1.0 && c(i, j) <= 1.0;
      }
    }
    symmetric += sym;
    unit_diag += diag;
    in_range += range;
    for (auto target : {SpectrumTarget::kGradient, SpectrumTarget::kWeight}) {
      const Matrix s = spectrum_over_time(a, layer, target);
      for (std::size_t i = 0; i < s.rows(); ++i) {
        bool ok = s(i, 0) == 1.0;
        for (std::size_t j = 1; j < s.cols(); ++j) ok &= s(i, j) <= s(i, j - 1) && s(i, j) >= 0.0;
        rows_ok += ok;
        ++rows;
      }
    }
    for (std::size_t i = 0; i < refs.size(); ++i)
      grads_equal &= a.gradients.at(layer)[i] == b.gradients.at(layer)[i];
  }
  write_trace_csv(a, p.work / "trace_a");
  write_trace_csv(b, p.work / "trace_b");
  std::size_t files = 0, same_files = 0;
  for (const auto& e : std::filesystem::directory_iterator(p.work / "trace_a")) {
    ++files;
    if (read_all(e.path()) == read_all(p.work / "trace_b" / e.path().filename())) ++same_files;
  }

  // Informational: late-checkpoint similarity for the first-block q_proj and
  // the middle-block MLP projections.
  auto late_mean = [&](const std::string& layer) {
    const Matrix c = cosine_matrix(a, layer);
    const std::size_t n = c.rows(), from = n / 2;
    double s = 0.0;
    std::size_t k = 0;
    for (std::size_t i = from; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        s += c(i, j);
        ++k;
      }
    return k ? s / static_cast<double>(k) : 0.0;
  };
  const std::size_t n = a.layers.size() / 7;
  Outcome out;
  const std::size_t total = a.layers.size();
  out.pass = symmetric == total && unit_diag == total && in_range == total && rows_ok == rows &&
             grads_equal && same_files == files && files > 0;
  out.detail = fmt("%zu checkpoints x %zu layers: symmetric %zu, unit diagonal %zu, in [-1,1] %zu, "
                   "spectrum rows ok %zu/%zu, repeat capture identical (%zu/%zu CSV files byte-equal); "
                   "late-run mean cosine q_proj[0] %.3f, mlp.down_proj[%zu] %.3f (informational)",
                   refs.size(), total, symmetric, unit_diag, in_range, rows_ok, rows, same_files,
                   files, late_mean("layers.0.self_attn.q_proj"), n / 2,
                   late_mean("layers." + std::to_string(n / 2) + ".mlp.down_proj"));
  return out;
}

Outcome format_round_trip() {
  Pipeline& p = pipeline();
  std::size_t ok = 0;
  std::size_t factored = 0;
  for (const Model* m : {&p.pretrained, &p.compressed50}) {
    const auto bytes = save(*m);
    const LoadResult r = load(bytes);
    const Model rounded = rounded_to_storage(*m);
    bool same = r.checksum_ok && save(r.model) == bytes;
    for (const auto* proj : r.model.projections()) {
      const Projection& want = *rounded.find_projection(proj->name);
      same &= proj->is_factored() == want.is_factored() && proj->cls == want.cls;
      if (proj->is_factored()) {
        ++factored;
        same &= std::get<FactoredWeight>(proj->weight).a == std::get<FactoredWeight>(want.weight).a &&
                std::get<FactoredWeight>(proj->weight).b == std::get<FactoredWeight>(want.weight).b;
      } else {
        same &= std::get<DenseWeight>(proj->weight).w == std::get<DenseWeight>(want.weight).w;
      }
    }
    same &= r.model.embed == rounded.embed && r.model.head == rounded.head;
    ok += same;
  }

  const auto bytes = save(p.compressed50);
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | bytes[8 + i];
  const std::size_t start = 16 + len;
  std::mt19937_64 rng(1010);
  std::size_t flips = 0, detected = 0;
  for (int i = 0; i < 200; ++i) {
    auto bad = bytes;
    const std::size_t off = start + rng() % (bytes.size() - start);
    bad[off] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    ++flips;
    if (!load(bad).checksum_ok) ++detected;
  }

  const RankPlan back = plan_from_json(plan_to_json(p.plan50));
  const bool plan_ok = back == p.plan50 && plan_to_json(back) == plan_to_json(p.plan50);

  Outcome out;
  out.pass = ok == 2 && factored > 0 && detected == flips && plan_ok;
  out.detail = fmt("dense and factored (%zu factored layers) checkpoints bit-exact: %zu/2; "
                   "single-byte corruptions detected %zu/%zu; plan JSON field-exact: %s",
                   factored, ok, detected, flips, plan_ok ? "yes" : "no");
  return out;
}

Outcome memory_estimator() {
  // Knee-shaped normalized spectra (1 + i / 100)^-a per projection kind: q/k
  // and gate heavy-tailed, v and down flat, front and tail blocks heavier.
  const ArchitectureShape arch = llama2_7b_shape();
  const std::map<ProjKind, double> exponent{{ProjKind::kQ, 1.0},   {ProjKind::kK, 1.0},
                                            {ProjKind::kGate, 0.8}, {ProjKind::kUp, 0.5},
                                            {ProjKind::kO, 0.5},    {ProjKind::kV, 0.3},
                                            {ProjKind::kDown, 0.3}};
  std::vector<SpectrumReport> reports;
  for (const auto& layer : arch.projection_layers()) {
    const std::size_t block = std::stoul(layer.name.substr(7));
    const double mid = (static_cast<double>(arch.n_layers) - 1.0) / 2.0;
    const double edge = std::abs(static_cast<double>(block) - mid) / mid;
    const double a = exponent.at(layer.kind) * (1.0 + 0.3 * edge);
    const std::size_t p = std::min(layer.rows, layer.cols);
    std::vector<double> values(p);
    for (std::size_t i = 0; i < p; ++i) values[i] = std::pow(1.0 + static_cast<double>(i) / 100.0, -a);
    reports.push_back(normalize_spectrum(std::move(values), layer.name));
  }
  const RankPlan plan = search_threshold(reports, {0.5, 0.01, 0.005});
  const double dense = static_cast<double>(arch.dense_params());
  const double ratio = static_cast<double>(planned_params(arch, plan)) / dense;
  const double strict = static_cast<double>(planned_params(arch, plan, {true})) / dense;
  std::size_t lrc = 0;
  for (const auto& e : plan.entries) lrc += e.cls == LayerClass::kLRC;
  Outcome out;
  out.pass = std::abs(plan.achieved_err - 0.5) <= 0.01 && ratio >= 0.62 && ratio <= 0.72 &&
             arch.dense_params() == 6738415616ULL;
  out.detail = fmt("7B shapes: dense %.2fM params; plan k=%.3f, achieved ERR %.4f, %zu/224 LRCs; "
                   "param ratio %.4f (N-LRCs dense), %.4f (strict truncation); reference 0.67",
                   dense / 1e6, plan.threshold_k, plan.achieved_err, lrc, ratio, strict);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"1", "threshold-search fidelity", threshold_search_fidelity},
      {"2", "Eckart-Young suite", eckart_young_suite},
      {"3", "allocation dominance", allocation_dominance},
      {"4", "gradient exactness", gradient_exactness},
      {"5", "freezing and accounting", freezing_and_accounting},
      {"6", "compression-perplexity trend", compression_perplexity_trend},
      {"7", "LRC vs N-LRC trainability", lrc_beats_nlrc},
      {"8", "activation-whitened dominance", whitened_dominance},
      {"9", "dynamics invariants", dynamics_invariants},
      {"10", "format round-trip", format_round_trip},
      {"11", "memory estimator cross-check", memory_estimator},
  };
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) only.insert(argv[i]);

  // The lines also go to acceptance_report.txt in the working directory,
  // since ctest hides the output of passing tests.
  std::FILE* report = std::fopen("acceptance_report.txt", only.empty() ? "w" : "a");
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string line = fmt("[%s] criterion %s, %s (%.1fs): ", o.pass ? "PASS" : "FAIL", c.id,
                                 c.name, secs) + o.detail;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    if (report) std::fprintf(report, "%s\n", line.c_str());
    failures += o.pass ? 0 : 1;
  }
  if (report) std::fclose(report);
  std::filesystem::remove_all(std::filesystem::temp_directory_path() / "welore_acceptance");
  return failures == 0 ? 0 : 1;
}
