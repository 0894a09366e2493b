// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "welore/checkpoint.hpp"
#include "welore/error.hpp"
#include "welore/svd.hpp"
#include "welore/transformer.hpp"

namespace welore {

namespace {

bool is_projection_role(ParamRole r) {
  return r == ParamRole::kDense || r == ParamRole::kFactorA || r == ParamRole::kFactorB;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t step) {
  char name[32];
  std::snprintf(name, sizeof(name), "ckpt_%06zu.wlr", step);
  return dir / name;
}

// Top-r left singular vectors of g (m x r).
Matrix left_subspace(const Matrix& g, std::size_t r) {
  const SvdResult s = svd(g);
  Matrix p(g.rows(), r);
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t k = 0; k < r; ++k) p(i, k) = s.u(i, k);
  return p;
}

double grad_norm(Model& grads) {
  double s = 0.0;
  for (auto& ref : parameters(grads))
    for (double v : ref.value->data()) s += v * v;
  return std::sqrt(s);
}

void scale_grads(Model& grads, double factor) {
  for (auto& ref : parameters(grads))
    for (double& v : ref.value->data()) v *= factor;
}

void zero_grads(Model& grads) {
  for (auto& ref : parameters(grads)) ref.value->fill(0.0);
}

TrainRun run_loop(Model model, const Corpus& corpus, const TrainConfig& config,
                  const ParamFilter& trainable, AdamOptimizer::Galore galore,
                  const StepCallback& on_step) {
  if (config.seq_len > model.config.max_seq)
    throw Error(ErrorCode::kInvalidArgument, "seq_len exceeds the model's max_seq");
  if (config.batch == 0) throw Error(ErrorCode::kInvalidArgument, "batch must be positive");

  TrainRun run;
  Model grads = zeros_like(model, trainable);
  AdamOptimizer opt(model, grads, config, galore);
  run.trainable_params = count_params(model, trainable);
  run.optimizer_state_elements = opt.state_elements();
  std::size_t grad_elements = 0;
  for (auto& ref : parameters(grads)) grad_elements += ref.value->size();
  std::size_t live_params = 0;
  for (auto& ref : parameters(model)) live_params += ref.value->size();
  run.peak_live_elements = live_params + grad_elements + run.optimizer_state_elements;

  std::ofstream log_file;
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    log_file.open(config.out_dir / "log.csv");
    log_file << "step,loss,lr,tokens_per_sec\n";
  }
  auto save_checkpoint = [&](std::size_t step) {
    if (config.out_dir.empty() || config.checkpoint_every == 0) return;
    const auto path = checkpoint_path(config.out_dir, step);
    save_file(fold_adapters(model), path);
    run.checkpoints.push_back(path);
  };

  std::mt19937_64 rng(config.seed);
  save_checkpoint(0);
  double tps_sum = 0.0;
  std::size_t tps_count = 0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const TokenBatch batch = sample_batch(corpus, config.batch, config.seq_len, rng);
    zero_grads(grads);
    const double loss_value = loss_and_grad(model, batch, grads);
    if (!std::isfinite(loss_value)) {
      std::ostringstream os;
      os << "training diverged at step " << step << " (loss " << loss_value << ")";
      throw Error(ErrorCode::kNumerical, os.str());
    }
    if (config.grad_clip > 0.0) {
      const double norm = grad_norm(grads);
      if (norm > config.grad_clip) scale_grads(grads, config.grad_clip / norm);
    }
    const double lr = scheduled_lr(config, step);
    opt.step(model, grads, lr);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    StepRecord rec{step, loss_value, lr,
                   secs > 0.0 ? static_cast<double>(batch.token_count()) / secs : 0.0};
    if (step >= 10) {
      tps_sum += rec.tokens_per_sec;
      ++tps_count;
    }
    run.log.push_back(rec);
    if (log_file.is_open()) {
      char line[128];
      std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.6g\n", rec.step, rec.loss, rec.lr,
                    rec.tokens_per_sec);
      log_file << line;
    }
    if (on_step) on_step(rec);
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0)
      save_checkpoint(step + 1);
  }
  run.tokens_per_sec = tps_count > 0 ? tps_sum / static_cast<double>(tps_count) : 0.0;
  run.model = fold_adapters(model);
  return run;
}

}  // namespace

double scheduled_lr(const TrainConfig& config, std::size_t step) {
  const double total = static_cast<double>(std::max<std::size_t>(config.steps, 1));
  const double warmup = std::floor(config.warmup_frac * total);
  const double s = static_cast<double>(step);
  if (s < warmup) return config.lr * (s + 1.0) / warmup;
  const double span = std::max(1.0, total - warmup - 1.0);
  const double progress = std::min(1.0, (s - warmup) / span);
  const double floor = config.min_lr_ratio * config.lr;
  return floor + 0.5 * (config.lr - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

std::string_view to_string(FinetuneMode::Kind kind) {
  switch (kind) {
    case FinetuneMode::Kind::kFull: return "full";
    case FinetuneMode::Kind::kLrcOnly: return "lrc";
    case FinetuneMode::Kind::kNlrcOnly: return "nlrc";
    case FinetuneMode::Kind::kLora: return "lora";
    case FinetuneMode::Kind::kGalore: return "galore";
  }
  return "?";
}

FinetuneMode::Kind finetune_kind_from_string(std::string_view s) {
  if (s == "full") return FinetuneMode::Kind::kFull;
  if (s == "lrc") return FinetuneMode::Kind::kLrcOnly;
  if (s == "nlrc") return FinetuneMode::Kind::kNlrcOnly;
  if (s == "lora") return FinetuneMode::Kind::kLora;
  if (s == "galore") return FinetuneMode::Kind::kGalore;
  throw Error(ErrorCode::kInvalidArgument, "unknown fine-tune mode '" + std::string(s) + "'");
}

AdamOptimizer::AdamOptimizer(Model& model, const Model& grads, const TrainConfig& config,
                             Galore galore)
    : config_(config), galore_(galore) {
  auto params = parameters(model);
  auto gparams = parameters(const_cast<Model&>(grads));
  if (params.size() != gparams.size())
    throw Error(ErrorCode::kDimension, "optimizer: gradient structure does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (gparams[i].value->empty()) continue;
    Slot s;
    s.index = i;
    const Matrix& w = *params[i].value;
    s.galore = galore.enabled && is_projection_role(params[i].role) &&
               galore.rank < std::min(w.rows(), w.cols());
    if (s.galore) {
      s.m = Matrix(galore.rank, w.cols());
      s.v = Matrix(galore.rank, w.cols());
    } else {
      s.m = Matrix::zeros_like(w);
      s.v = Matrix::zeros_like(w);
    }
    slots_.push_back(std::move(s));
  }
}

std::size_t AdamOptimizer::state_elements() const {
  std::size_t n = 0;
  for (const auto& s : slots_) n += s.m.size() + s.v.size();
  return n;
}

void AdamOptimizer::step(Model& model, const Model& grads, double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2, eps = config_.eps;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto params = parameters(model);
  auto gparams = parameters(const_cast<Model&>(grads));
  for (auto& s : slots_) {
    Matrix& w = *params[s.index].value;
    const Matrix& g = *gparams[s.index].value;
    if (!s.galore) {
      auto wd = w.data();
      const auto gd = g.data();
      auto md = s.m.data();
      auto vd = s.v.data();
      for (std::size_t i = 0; i < wd.size(); ++i) {
        md[i] = b1 * md[i] + (1.0 - b1) * gd[i];
        vd[i] = b2 * vd[i] + (1.0 - b2) * gd[i] * gd[i];
        wd[i] -= lr * (md[i] / c1) / (std::sqrt(vd[i] / c2) + eps);
      }
      continue;
    }
    if (s.projector.empty() || (t_ - 1) % galore_.refresh_every == 0)
      s.projector = left_subspace(g, galore_.rank);
    const Matrix r = matmul_tn(s.projector, g);  // rank x n
    Matrix dir(r.rows(), r.cols());
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double gi = r.data()[i];
      double& mi = s.m.data()[i];
      double& vi = s.v.data()[i];
      mi = b1 * mi + (1.0 - b1) * gi;
      vi = b2 * vi + (1.0 - b2) * gi * gi;
      dir.data()[i] = (mi / c1) / (std::sqrt(vi / c2) + eps);
    }
    add_matmul(w, s.projector, dir, -lr);
  }
}

ParamFilter trainable_filter(const FinetuneMode& mode) {
  const bool norms = mode.include_norms;
  switch (mode.kind) {
    case FinetuneMode::Kind::kFull:
    case FinetuneMode::Kind::kGalore:
      return [](const ParamRef&) { return true; };
    case FinetuneMode::Kind::kLrcOnly:
    case FinetuneMode::Kind::kNlrcOnly: {
      const LayerClass want =
          mode.kind == FinetuneMode::Kind::kLrcOnly ? LayerClass::kLRC : LayerClass::kNLRC;
      return [want, norms](const ParamRef& r) {
        if (r.role == ParamRole::kNorm) return norms;
        return is_projection_role(r.role) && r.owner != nullptr && r.owner->cls == want;
      };
    }
    case FinetuneMode::Kind::kLora:
      return [norms](const ParamRef& r) {
        if (r.role == ParamRole::kNorm) return norms;
        return r.role == ParamRole::kLoraU || r.role == ParamRole::kLoraV;
      };
  }
  return [](const ParamRef&) { return false; };
}

Model attach_lora(const Model& model, const FinetuneMode& mode, std::uint64_t seed) {
  if (mode.rank == 0) throw Error(ErrorCode::kInvalidArgument, "LoRA rank must be positive");
  Model out = model;
  std::mt19937_64 rng(seed ^ 0x5eed1a7e5eedULL);
  auto matches = [](const Projection& p, const std::string& t) {
    return p.name == t || p.name.ends_with("." + t);
  };
  std::set<std::string> unmatched(mode.targets.begin(), mode.targets.end());
  for (auto* p : out.projections()) {
    bool hit = mode.targets.empty();
    for (const auto& t : mode.targets)
      if (matches(*p, t)) {
        hit = true;
        unmatched.erase(t);
      }
    if (!hit) continue;
    const std::size_t r = std::min(mode.rank, p->full_rank());
    LoraAdapter ad;
    ad.u = Matrix(p->rows(), r);
    ad.v = Matrix(r, p->cols());
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(p->cols())));
    for (double& x : ad.v.data()) x = dist(rng);
    ad.scale = mode.alpha / static_cast<double>(r);
    p->lora = std::move(ad);
  }
  if (!unmatched.empty()) {
    std::string msg = "LoRA targets match no layer:";
    for (const auto& t : unmatched) msg += " " + t;
    throw Error(ErrorCode::kInvalidArgument, msg);
  }
  return out;
}

std::size_t count_params(Model& model, const ParamFilter& filter) {
  std::size_t n = 0;
  for (const auto& ref : parameters(model))
    if (filter(ref)) n += ref.value->size();
  return n;
}

double perplexity(const Model& model, const Corpus& corpus, std::size_t seq_len,
                  std::size_t max_tokens) {
  const TokenBatch batch = eval_windows(corpus, std::min(seq_len, model.config.max_seq), max_tokens);
  return std::exp(loss(model, batch));
}

TrainRun train(Model model, const Corpus& corpus, const TrainConfig& config,
               const StepCallback& on_step) {
  const double ppl_before = perplexity(model, corpus, config.seq_len, config.eval_tokens);
  TrainRun run = run_loop(std::move(model), corpus, config,
                          [](const ParamRef&) { return true; }, {}, on_step);
  run.ppl_before = ppl_before;
  run.ppl_after = perplexity(run.model, corpus, config.seq_len, config.eval_tokens);
  return run;
}

TrainRun finetune(const Model& model, const Corpus& corpus, const FinetuneMode& mode,
                  const TrainConfig& config, const StepCallback& on_step) {
  using Kind = FinetuneMode::Kind;
  if (mode.kind == Kind::kLrcOnly || mode.kind == Kind::kNlrcOnly) {
    bool labeled = false;
    for (const auto* p : model.projections()) labeled |= p->cls != LayerClass::kUnlabeled;
    if (!labeled)
      throw Error(ErrorCode::kInvalidArgument,
                  "LRC/N-LRC fine-tuning needs a compressed checkpoint with class labels");
  }
  Model start = mode.kind == Kind::kLora ? attach_lora(model, mode, config.seed) : model;
  AdamOptimizer::Galore galore;
  if (mode.kind == Kind::kGalore) {
    if (mode.rank == 0 || mode.refresh_every == 0)
      throw Error(ErrorCode::kInvalidArgument, "GaLore rank and refresh period must be positive");
    galore = {true, mode.rank, mode.refresh_every};
  }
  const double ppl_before = perplexity(start, corpus, config.seq_len, config.eval_tokens);
  TrainRun run = run_loop(std::move(start), corpus, config, trainable_filter(mode), galore, on_step);
  run.ppl_before = ppl_before;
  run.ppl_after = perplexity(run.model, corpus, config.seq_len, config.eval_tokens);
  return run;
}

}  // namespace welore
