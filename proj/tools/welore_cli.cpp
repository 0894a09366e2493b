// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// welore: command-line front end for spectrum analysis, rank planning,
// compression, training and gradient-dynamics capture.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "welore/checkpoint.hpp"
#include "welore/corpus.hpp"
#include "welore/dynamics.hpp"
#include "welore/error.hpp"
#include "welore/factorizer.hpp"
#include "welore/rank_plan.hpp"
#include "welore/spectrum.hpp"
#include "welore/train.hpp"
#include "welore/transformer.hpp"

#ifndef WELORE_VERSION
#define WELORE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace welore;

namespace {

[[noreturn]] void usage_error(const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, msg); }

// Binds every flag of a subcommand to a variable and to a key of the same
// name in the optional --config JSON file. Flags given on the command line
// win over the file.
class OptionSet {
 public:
  OptionSet(CLI::App* app, std::string command) : app_(app), command_(std::move(command)) {
    app_->add_option("--config", config_path_, "JSON file with option values (flags override it)");
  }

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + name, var, help)->capture_default_str();
    entries_.push_back({name, opt, [&var](const json& j) { var = j.get<T>(); },
                        [&var] { return json(var); }});
    return opt;
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + name, var, help);
    entries_.push_back({name, opt, [&var](const json& j) { var = j.get<bool>(); },
                        [&var] { return json(var); }});
    return opt;
  }

  // Applies config-file values to options not given as flags.
  void resolve() {
    if (config_path_.empty()) return;
    std::ifstream is(config_path_);
    if (!is) usage_error("cannot open config file '" + config_path_ + "'");
    json cfg;
    try {
      cfg = json::parse(is);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormat, "config file '" + config_path_ + "': " + e.what());
    }
    if (!cfg.is_object()) usage_error("config file must hold a JSON object");
    if (cfg.contains("options") && cfg.contains("version")) cfg = cfg["options"];  // a snapshot
    for (const auto& [key, value] : cfg.items()) {
      const auto it = std::find_if(entries_.begin(), entries_.end(),
                                   [&key](const Entry& e) { return e.name == key; });
      if (it == entries_.end()) usage_error("unknown config key '" + key + "' for " + command_);
      if (it->option->count() > 0) continue;
      try {
        it->set(value);
      } catch (const json::exception&) {
        usage_error("config key '" + key + "' has the wrong type");
      }
    }
  }

  json snapshot() const {
    json options = json::object();
    for (const auto& e : entries_) options[e.name] = e.get();
    return {{"tool", "welore"}, {"version", WELORE_VERSION}, {"command", command_},
            {"options", options}};
  }

 private:
  struct Entry {
    std::string name;
    CLI::Option* option;
    std::function<void(const json&)> set;
    std::function<json()> get;
  };
  CLI::App* app_;
  std::string command_;
  std::string config_path_;
  std::vector<Entry> entries_;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kFormat, "cannot write '" + path.string() + "'");
  os << text;
}

// Snapshot next to a file output (<file>.config.json) or inside a directory
// output (resolved_config.json).
void write_snapshot_for_file(const OptionSet& opts, const fs::path& out) {
  write_text(fs::path(out.string() + ".config.json"), opts.snapshot().dump(2) + "\n");
}
void write_snapshot_in_dir(const OptionSet& opts, const fs::path& dir) {
  write_text(dir / "resolved_config.json", opts.snapshot().dump(2) + "\n");
}

Model load_checkpoint(const std::string& path) {
  LoadResult r = load_file(path);
  if (!r.checksum_ok) std::cerr << "warning: " << r.warning << "\n";
  return std::move(r.model);
}

Corpus load_corpus(const std::string& path) {
  if (path.empty()) usage_error("a corpus path is required");
  Corpus c = Corpus::from_path(path);
  if (c.bytes.size() < 2) throw Error(ErrorCode::kFormat, "corpus '" + path + "' is too small");
  return c;
}

// ---------------------------------------------------------------------------
// SVG heatmaps

std::string color(double t, bool diverging) {
  t = std::clamp(t, 0.0, 1.0);
  // Diverging: blue - white - red. Sequential: dark blue - teal - yellow.
  struct Rgb {
    double r, g, b;
  };
  const std::vector<Rgb> stops =
      diverging ? std::vector<Rgb>{{33, 102, 172}, {247, 247, 247}, {178, 24, 43}}
                : std::vector<Rgb>{{68, 1, 84}, {33, 145, 140}, {253, 231, 37}};
  const double x = t * static_cast<double>(stops.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(x), stops.size() - 2);
  const double f = x - static_cast<double>(i);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                static_cast<int>(std::lround(stops[i].r + f * (stops[i + 1].r - stops[i].r))),
                static_cast<int>(std::lround(stops[i].g + f * (stops[i + 1].g - stops[i].g))),
                static_cast<int>(std::lround(stops[i].b + f * (stops[i + 1].b - stops[i].b))));
  return buf;
}

void write_heatmap_svg(const fs::path& path, const Matrix& m, double lo, double hi, bool diverging,
                       const std::string& title, const std::string& row_label,
                       const std::string& col_label) {
  const double cell = std::clamp(480.0 / static_cast<double>(std::max<std::size_t>(m.cols(), 1)), 1.0, 16.0);
  const double ch = std::clamp(480.0 / static_cast<double>(std::max<std::size_t>(m.rows(), 1)), 1.0, 16.0);
  const double left = 40, top = 30;
  const double width = left + cell * static_cast<double>(m.cols()) + 20;
  const double height = top + ch * static_cast<double>(m.rows()) + 30;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << left << "\" y=\"18\">" << title << "</text>\n";
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      const std::string fill = std::isfinite(v) ? color((v - lo) / (hi - lo), diverging) : "#999999";
      os << "<rect x=\"" << left + cell * static_cast<double>(j) << "\" y=\""
         << top + ch * static_cast<double>(i) << "\" width=\"" << cell << "\" height=\"" << ch
         << "\" fill=\"" << fill << "\"/>\n";
    }
  os << "<text x=\"" << left << "\" y=\"" << height - 10 << "\">" << col_label << "</text>\n";
  os << "<text x=\"12\" y=\"" << top + 10 << "\" transform=\"rotate(90 12 " << top + 10 << ")\">"
     << row_label << "</text>\n</svg>\n";
  write_text(path, os.str());
}

// ---------------------------------------------------------------------------
// Subcommands

void add_train_options(OptionSet& o, TrainConfig& c) {
  o.add("steps", c.steps, "optimizer steps");
  o.add("batch", c.batch, "sequences per step");
  o.add("seq-len", c.seq_len, "tokens per sequence");
  o.add("lr", c.lr, "peak learning rate");
  o.add("warmup-frac", c.warmup_frac, "linear warmup share of the steps");
  o.add("min-lr-ratio", c.min_lr_ratio, "cosine decay floor as a fraction of lr");
  o.add("beta1", c.beta1, "Adam beta1");
  o.add("beta2", c.beta2, "Adam beta2");
  o.add("eps", c.eps, "Adam epsilon");
  o.add("grad-clip", c.grad_clip, "global gradient-norm clip (<= 0 disables)");
  o.add("seed", c.seed, "batch sampling and init seed");
  o.add("checkpoint-every", c.checkpoint_every, "steps between checkpoints (0: none)");
  o.add("eval-tokens", c.eval_tokens, "token budget of the perplexity evaluations");
}

json run_summary(const TrainRun& run) {
  return {{"trainable_params", run.trainable_params},
          {"optimizer_state_elements", run.optimizer_state_elements},
          {"peak_live_elements", run.peak_live_elements},
          {"tokens_per_sec", run.tokens_per_sec},
          {"first_loss", run.log.empty() ? 0.0 : run.log.front().loss},
          {"final_loss", run.log.empty() ? 0.0 : run.log.back().loss},
          {"ppl_before", run.ppl_before},
          {"ppl_after", run.ppl_after},
          {"checkpoints", run.checkpoints.size()}};
}

struct Cli {
  CLI::App app{"welore: adaptive low-rank compression and LRC fine-tuning toolkit", "welore"};
  std::vector<std::unique_ptr<OptionSet>> sets;
  std::function<void()> action;

  OptionSet& command(const std::string& name, const std::string& help,
                     std::function<void(OptionSet&)> run) {
    CLI::App* sub = app.add_subcommand(name, help);
    sets.push_back(std::make_unique<OptionSet>(sub, name));
    OptionSet* set = sets.back().get();
    sub->callback([this, set, run] { action = [set, run] { set->resolve(); run(*set); }; });
    return *set;
  }
};

void register_commands(Cli& cli) {
  {
    static std::string ckpt, out;
    OptionSet& o = cli.command("analyze", "normalized singular spectra of every projection",
                               [](OptionSet& o) {
                                 if (ckpt.empty() || out.empty()) usage_error("analyze needs --ckpt and --out");
                                 const auto reports = analyze_model(load_checkpoint(ckpt));
                                 std::ostringstream os;
                                 write_spectra_csv(os, reports);
                                 write_text(out, os.str());
                                 write_snapshot_for_file(o, out);
                               });
    o.add("ckpt", ckpt, "input checkpoint");
    o.add("out", out, "spectra CSV to write");
  }
  {
    static std::string spectra, out;
    static double err = 0.5, tol = 0.01, step = 0.005, k = -1.0;
    OptionSet& o = cli.command("plan", "search the global threshold for a target ERR", [](OptionSet& o) {
      if (spectra.empty() || out.empty()) usage_error("plan needs --spectra and --out");
      std::ifstream is(spectra);
      if (!is) throw Error(ErrorCode::kFormat, "cannot open '" + spectra + "'");
      const auto reports = read_spectra_csv(is);
      const RankPlan plan =
          k >= 0.0 ? plan_for_threshold(reports, k) : search_threshold(reports, {err, tol, step});
      if (!plan.exact)
        std::cerr << "warning: no grid point within tolerance; using closest k = " << plan.threshold_k
                  << " (ERR " << plan.achieved_err << ")\n";
      write_text(out, plan_to_json(plan) + "\n");
      write_snapshot_for_file(o, out);
    });
    o.add("spectra", spectra, "spectra CSV from analyze");
    o.add("err", err, "target effective rank reduction in [0, 1]");
    o.add("tol", tol, "accepted |achieved - target|");
    o.add("step", step, "threshold grid step");
    o.add("k", k, "use this threshold directly instead of searching (negative: search)");
    o.add("out", out, "plan JSON to write");
  }
  {
    static std::string ckpt, plan_path, out, report, calib, metric = "magnitude";
    static bool actsvd = false, force = false;
    static double prune = 0.0;
    static std::size_t calib_tokens = 4096, calib_seq = 64;
    OptionSet& o = cli.command("compress", "factor LRCs per a rank plan", [](OptionSet& o) {
      if (ckpt.empty() || plan_path.empty() || out.empty())
        usage_error("compress needs --ckpt, --plan and --out");
      if (metric != "magnitude" && metric != "actnorm")
        usage_error("--metric must be magnitude or actnorm");
      const bool need_stats = actsvd || (prune > 0.0 && metric == "actnorm");
      if (need_stats && calib.empty()) usage_error("--actsvd and --metric actnorm need --calib");
      const Model model = load_checkpoint(ckpt);
      std::ifstream is(plan_path);
      if (!is) throw Error(ErrorCode::kFormat, "cannot open '" + plan_path + "'");
      const RankPlan plan = plan_from_json(std::string(std::istreambuf_iterator<char>(is), {}));
      ActivationStatsMap stats;
      if (need_stats) {
        const Corpus c = load_corpus(calib);
        stats = collect_activation_stats(
            model, eval_windows(c, std::min(calib_seq, model.config.max_seq), calib_tokens));
      }
      CompressOptions copts{force};
      CompressResult r = actsvd ? activation_whitened_compress(model, plan, stats, copts)
                                : compress(model, plan, copts);
      if (prune > 0.0) {
        r.model = prune_nlrc(r.model, prune,
                             metric == "actnorm" ? PruneMetric::kActivationNorm : PruneMetric::kMagnitude,
                             need_stats ? &stats : nullptr);
      }
      save_file(r.model, out);
      write_snapshot_for_file(o, out);
      if (!report.empty()) {
        std::ostringstream os;
        write_report_csv(os, r.report);
        write_text(report, os.str());
      }
      std::cout << json{{"original_params", r.report.original_params},
                        {"compressed_params", r.report.compressed_params},
                        {"param_ratio", r.report.param_ratio}}
                       .dump()
                << "\n";
    });
    o.add("ckpt", ckpt, "input checkpoint");
    o.add("plan", plan_path, "plan JSON from plan");
    o.flag("actsvd", actsvd, "activation-whitened truncation (needs --calib)");
    o.add("calib", calib, "calibration corpus (file or directory)");
    o.add("calib-tokens", calib_tokens, "calibration token budget");
    o.add("calib-seq-len", calib_seq, "calibration window length");
    o.flag("force-nlrc-truncate", force, "truncate N-LRCs at their planned rank too");
    o.add("prune-nlrc", prune, "unstructured sparsity for N-LRCs in [0, 1)");
    o.add("metric", metric, "pruning score: magnitude or actnorm");
    o.add("out", out, "compressed checkpoint to write");
    o.add("report", report, "per-layer report CSV");
  }
  {
    static std::string corpus, out;
    static ModelConfig mc = [] {
      ModelConfig c;
      c.max_seq = 64;
      return c;
    }();
    static TrainConfig tc = [] {
      TrainConfig c;
      c.steps = 2000;
      c.batch = 4;
      c.seq_len = 64;
      c.lr = 3e-3;
      c.min_lr_ratio = 0.1;
      c.checkpoint_every = 100;
      c.eval_tokens = 4096;
      return c;
    }();
    OptionSet& o = cli.command("train", "pretrain the toy decoder with periodic checkpoints", [](OptionSet& o) {
      if (corpus.empty() || out.empty()) usage_error("train needs --corpus and --out");
      mc.validate();
      const Corpus c = load_corpus(corpus);
      tc.out_dir = out;
      write_snapshot_in_dir(o, out);
      const TrainRun run = train(init_model(mc, tc.seed), c, tc);
      save_file(run.model, fs::path(out) / "final.wlr");
      const json summary = run_summary(run);
      write_text(fs::path(out) / "summary.json", summary.dump(2) + "\n");
      std::cout << summary.dump() << "\n";
    });
    o.add("corpus", corpus, "training corpus (file or directory)");
    o.add("out", out, "run directory");
    o.add("d-model", mc.d_model, "model width");
    o.add("layers", mc.n_layers, "decoder blocks");
    o.add("heads", mc.n_heads, "attention heads");
    o.add("d-ff", mc.d_ff, "MLP width");
    o.add("max-seq", mc.max_seq, "maximum sequence length");
    o.add("rope-base", mc.rope_base, "rotary embedding base");
    add_train_options(o, tc);
  }
  {
    static std::string ckpt, corpus, out, mode = "lrc", targets;
    static FinetuneMode fm;
    static TrainConfig tc = [] {
      TrainConfig c;
      c.steps = 500;
      c.batch = 4;
      c.seq_len = 64;
      c.lr = 1e-3;
      c.eval_tokens = 4096;
      return c;
    }();
    OptionSet& o = cli.command("finetune", "fine-tune a checkpoint", [](OptionSet& o) {
      if (ckpt.empty() || corpus.empty() || out.empty())
        usage_error("finetune needs --ckpt, --corpus and --out");
      fm.kind = finetune_kind_from_string(mode);
      fm.targets.clear();
      std::stringstream ss(targets);
      for (std::string t; std::getline(ss, t, ',');)
        if (!t.empty()) fm.targets.push_back(t);
      const Model model = load_checkpoint(ckpt);
      const Corpus c = load_corpus(corpus);
      tc.out_dir = out;
      write_snapshot_in_dir(o, out);
      const TrainRun run = finetune(model, c, fm, tc);
      save_file(run.model, fs::path(out) / "final.wlr");
      json summary = run_summary(run);
      summary["mode"] = mode;
      write_text(fs::path(out) / "summary.json", summary.dump(2) + "\n");
      std::cout << summary.dump() << "\n";
    });
    o.add("ckpt", ckpt, "starting checkpoint");
    o.add("mode", mode, "full, lrc, nlrc, lora or galore");
    o.add("corpus", corpus, "fine-tuning corpus (file or directory)");
    o.add("out", out, "run directory");
    o.add("rank", fm.rank, "LoRA / GaLore rank");
    o.add("alpha", fm.alpha, "LoRA scale numerator");
    o.add("targets", targets, "comma-separated LoRA target layers (empty: all)");
    o.add("refresh-every", fm.refresh_every, "GaLore projector refresh period");
    o.flag("include-norms", fm.include_norms, "also train RMSNorm gains");
    add_train_options(o, tc);
  }
  {
    static std::string ckpt, corpus, out;
    static std::size_t seq_len = 0, max_tokens = 8192;
    OptionSet& o = cli.command("eval", "perplexity of a checkpoint on a corpus", [](OptionSet& o) {
      if (ckpt.empty() || corpus.empty()) usage_error("eval needs --ckpt and --corpus");
      const Model model = load_checkpoint(ckpt);
      const Corpus c = load_corpus(corpus);
      const std::size_t len = seq_len == 0 ? model.config.max_seq : seq_len;
      const double ppl = perplexity(model, c, len, max_tokens);
      const json result{{"perplexity", ppl},
                        {"loss", std::log(ppl)},
                        {"seq_len", std::min(len, model.config.max_seq)},
                        {"max_tokens", max_tokens},
                        {"params", model.param_count()},
                        {"version", WELORE_VERSION}};
      if (!out.empty()) {
        write_text(out, result.dump(2) + "\n");
        write_snapshot_for_file(o, out);
      }
      std::cout << result.dump() << "\n";
    });
    o.add("ckpt", ckpt, "checkpoint");
    o.add("corpus", corpus, "evaluation corpus (file or directory)");
    o.add("seq-len", seq_len, "window length (0: model maximum)");
    o.add("max-tokens", max_tokens, "token budget");
    o.add("out", out, "optional JSON file to write");
  }
  {
    static std::string run, layers = ".*", out, corpus;
    static ProbeOptions probe;
    static bool full = false;
    OptionSet& o = cli.command("dynamics", "gradient and weight dynamics across run checkpoints", [](OptionSet& o) {
      if (run.empty() || out.empty()) usage_error("dynamics needs --run and --out");
      // Cadence and corpus default to the run's own resolved config.
      std::size_t every = 0, last = 0;
      std::string probe_corpus = corpus;
      std::ifstream rc(fs::path(run) / "resolved_config.json");
      if (rc) {
        try {
          const json snap = json::parse(rc);
          const json& opts = snap.at("options");
          every = opts.value("checkpoint-every", std::size_t{0});
          last = opts.value("steps", std::size_t{0});
          if (probe_corpus.empty()) probe_corpus = opts.value("corpus", std::string());
        } catch (const json::exception& e) {
          throw Error(ErrorCode::kFormat, "run config: " + std::string(e.what()));
        }
      }
      if (probe_corpus.empty()) usage_error("dynamics needs --corpus (run has no recorded corpus)");
      const Corpus c = load_corpus(probe_corpus);
      const auto refs = run_checkpoints(run, every, last);
      const DynamicsTrace trace = capture(refs, c, probe, layers);
      write_trace_csv(trace, out, full);
      for (const auto& layer : trace.layers) {
        write_heatmap_svg(fs::path(out) / (layer + ".cosine.svg"), cosine_matrix(trace, layer), -1.0,
                          1.0, true, layer + ": gradient cosine similarity", "checkpoint",
                          "checkpoint");
        write_heatmap_svg(fs::path(out) / (layer + ".grad_spectrum.svg"),
                          spectrum_over_time(trace, layer, SpectrumTarget::kGradient), 0.0, 1.0,
                          false, layer + ": normalized gradient spectrum", "checkpoint",
                          "singular value index");
        write_heatmap_svg(fs::path(out) / (layer + ".weight_spectrum.svg"),
                          spectrum_over_time(trace, layer, SpectrumTarget::kWeight), 0.0, 1.0,
                          false, layer + ": normalized weight spectrum", "checkpoint",
                          "singular value index");
      }
      write_snapshot_in_dir(o, out);
      std::cout << json{{"checkpoints", refs.size()}, {"layers", trace.layers.size()}}.dump() << "\n";
    });
    o.add("run", run, "run directory with ckpt_*.wlr files");
    o.add("layers", layers, "regular expression over layer names");
    o.add("corpus", corpus, "probe corpus (default: the run's training corpus)");
    o.add("probe-seed", probe.seed, "probe batch seed");
    o.add("probe-batch", probe.batch, "probe sequences");
    o.add("probe-seq-len", probe.seq_len, "probe sequence length");
    o.flag("full-gradients", full, "also write every captured gradient");
    o.add("out", out, "output directory");
  }
  {
    static std::string ckpt, out;
    static std::size_t bytes_per_param = 4;
    OptionSet& o = cli.command("estimate", "parameter count and weight memory", [](OptionSet& o) {
      if (ckpt.empty()) usage_error("estimate needs --ckpt");
      if (bytes_per_param == 0) usage_error("--bytes-per-param must be positive");
      const Model model = load_checkpoint(ckpt);
      const MemoryEstimate e = estimate_memory(model, bytes_per_param);
      std::size_t lrc = 0, nlrc = 0, factored = 0;
      for (const auto* p : model.projections()) {
        lrc += p->cls == LayerClass::kLRC;
        nlrc += p->cls == LayerClass::kNLRC;
        factored += p->is_factored();
      }
      const json result{{"total_params", e.total_params},  {"weight_bytes", e.weight_bytes},
                        {"bytes_per_param", bytes_per_param}, {"lrc_layers", lrc},
                        {"nlrc_layers", nlrc},              {"factored_layers", factored},
                        {"version", WELORE_VERSION}};
      if (!out.empty()) {
        write_text(out, result.dump(2) + "\n");
        write_snapshot_for_file(o, out);
      }
      std::cout << result.dump() << "\n";
    });
    o.add("ckpt", ckpt, "checkpoint");
    o.add("bytes-per-param", bytes_per_param, "storage bytes per parameter");
    o.add("out", out, "optional JSON file to write");
  }
  {
    static std::string out, style = "prose";
    static std::size_t bytes = 1 << 20;
    static std::uint64_t seed = 1;
    OptionSet& o = cli.command("gen-corpus", "write a synthetic byte corpus", [](OptionSet& o) {
      if (out.empty()) usage_error("gen-corpus needs --out");
      if (style != "prose" && style != "records") usage_error("--style must be prose or records");
      write_text(out, synthetic_text(bytes, seed,
                                     style == "prose" ? CorpusStyle::kProse : CorpusStyle::kRecords));
      write_snapshot_for_file(o, out);
    });
    o.add("bytes", bytes, "corpus size");
    o.add("seed", seed, "generator seed");
    o.add("style", style, "prose or records");
    o.add("out", out, "file to write");
  }
}

int fail(std::string_view code, std::string msg, int exit_code) {
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  std::cerr << "error " << code << ": " << msg << "\n";
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  cli.app.set_version_flag("--version", WELORE_VERSION);
  cli.app.require_subcommand(1);
  register_commands(cli);
  try {
    cli.app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return cli.app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }
  try {
    cli.action();
  } catch (const Error& e) {
    return fail(to_string(e.code()), e.what(), exit_code_for(e.code()));
  } catch (const json::exception& e) {
    return fail("format", e.what(), 3);
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 3);
  }
  return 0;
}
