// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "welore/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <regex>
#include <set>

#include "welore/checkpoint.hpp"
#include "welore/error.hpp"
#include "welore/svd.hpp"
#include "welore/transformer.hpp"

namespace welore {

namespace {

constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

void write_row(std::ostream& os, std::span<const double> values) {
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", values[i]);
    os << (i ? "," : "") << buf;
  }
  os << '\n';
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kFormat, "cannot write " + path.string());
  for (std::size_t i = 0; i < m.rows(); ++i) write_row(os, m.row(i));
}

}  // namespace

std::vector<CheckpointRef> run_checkpoints(const std::filesystem::path& run_dir,
                                           std::size_t expected_every, std::size_t expected_last) {
  if (!std::filesystem::is_directory(run_dir))
    throw Error(ErrorCode::kFormat, "run directory not found: " + run_dir.string());
  std::vector<CheckpointRef> refs;
  const std::regex re(R"(ckpt_(\d+)\.wlr)");
  for (const auto& e : std::filesystem::directory_iterator(run_dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, re)) refs.push_back({std::stoul(m[1].str()), e.path()});
  }
  std::sort(refs.begin(), refs.end(),
            [](const CheckpointRef& a, const CheckpointRef& b) { return a.step < b.step; });
  if (expected_every > 0) {
    std::set<std::size_t> have;
    for (const auto& r : refs) have.insert(r.step);
    std::string gaps;
    for (std::size_t s = 0; s <= expected_last; s += expected_every)
      if (!have.count(s)) gaps += " " + std::to_string(s);
    if (!gaps.empty())
      throw Error(ErrorCode::kFormat, "missing checkpoints for steps:" + gaps);
  }
  if (refs.empty()) throw Error(ErrorCode::kFormat, "no checkpoints in " + run_dir.string());
  return refs;
}

DynamicsTrace capture(const std::vector<CheckpointRef>& checkpoints, const Corpus& corpus,
                      const ProbeOptions& probe, const std::string& layer_pattern) {
  std::string missing;
  for (const auto& c : checkpoints)
    if (!std::filesystem::exists(c.path)) missing += " " + c.path.string();
  if (!missing.empty()) throw Error(ErrorCode::kFormat, "missing checkpoint files:" + missing);
  if (checkpoints.empty()) throw Error(ErrorCode::kInvalidArgument, "capture: no checkpoints");

  std::regex re;
  try {
    re = std::regex(layer_pattern);
  } catch (const std::regex_error& ex) {
    throw Error(ErrorCode::kInvalidArgument, "bad layer pattern: " + std::string(ex.what()));
  }

  DynamicsTrace trace;
  trace.probe_seed = probe.seed;
  std::mt19937_64 rng(probe.seed);
  const TokenBatch batch = sample_batch(corpus, probe.batch, probe.seq_len, rng);

  for (const auto& c : checkpoints) {
    const Model model = densified(load_file(c.path).model);
    if (trace.layers.empty()) {
      for (const auto* p : model.projections())
        if (std::regex_search(p->name, re)) trace.layers.push_back(p->name);
      if (trace.layers.empty())
        throw Error(ErrorCode::kInvalidArgument, "layer pattern matches no projection");
    }
    const std::set<std::string> wanted(trace.layers.begin(), trace.layers.end());
    Model grads = zeros_like(model, [&wanted](const ParamRef& r) {
      return r.owner != nullptr && wanted.count(r.owner->name) > 0;
    });
    loss_and_grad(model, batch, grads);
    trace.checkpoint_steps.push_back(c.step);
    for (const auto& name : trace.layers) {
      const Projection* gp = grads.find_projection(name);
      const Projection* wp = model.find_projection(name);
      const Matrix& g = std::get<DenseWeight>(gp->weight).w;
      trace.gradients[name].push_back(g);
      trace.gradient_spectra[name].push_back(analyze(g, name));
      trace.weight_spectra[name].push_back(analyze(wp->materialize(), name));
    }
  }
  return trace;
}

Matrix cosine_matrix(const std::vector<Matrix>& gradients) {
  const std::size_t n = gradients.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = std::sqrt(dot(gradients[i], gradients[i]));
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double v = kUndefined;
      if (norms[i] > 0.0 && norms[j] > 0.0) {
        v = i == j ? 1.0
                   : std::clamp(dot(gradients[i], gradients[j]) / (norms[i] * norms[j]), -1.0, 1.0);
      }
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return c;
}

Matrix cosine_matrix(const DynamicsTrace& trace, const std::string& layer) {
  const auto it = trace.gradients.find(layer);
  if (it == trace.gradients.end())
    throw Error(ErrorCode::kInvalidArgument, "layer '" + layer + "' not in trace");
  if (it->second.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "cosine matrix needs at least two checkpoints");
  return cosine_matrix(it->second);
}

Matrix spectrum_over_time(const DynamicsTrace& trace, const std::string& layer,
                          SpectrumTarget target) {
  const auto& source =
      target == SpectrumTarget::kGradient ? trace.gradient_spectra : trace.weight_spectra;
  const auto it = source.find(layer);
  if (it == source.end())
    throw Error(ErrorCode::kInvalidArgument, "layer '" + layer + "' not in trace");
  const auto& rows = it->second;
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().values.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].values.begin(), rows[i].values.end(), m.row(i).begin());
  return m;
}

std::vector<double> saturation_index(const Matrix& cosine) {
  const std::size_t n = cosine.rows();
  std::vector<double> index(n, kUndefined);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::isnan(cosine(i, j))) continue;
      sum += cosine(i, j);
      ++count;
    }
    if (count > 0) index[i] = sum / static_cast<double>(count);
  }
  return index;
}

bool is_saturating(const std::vector<double>& index, const std::vector<std::size_t>& steps,
                   std::size_t total_steps, double cutoff, double horizon) {
  for (std::size_t i = 0; i < index.size() && i < steps.size(); ++i) {
    if (static_cast<double>(steps[i]) > horizon * static_cast<double>(total_steps)) continue;
    if (!std::isnan(index[i]) && index[i] > cutoff) return true;
  }
  return false;
}

void write_trace_csv(const DynamicsTrace& trace, const std::filesystem::path& dir,
                     bool full_gradients) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "steps.csv");
    os << "index,step\n";
    for (std::size_t i = 0; i < trace.checkpoint_steps.size(); ++i)
      os << i << ',' << trace.checkpoint_steps[i] << '\n';
  }
  for (const auto& layer : trace.layers) {
    if (trace.checkpoint_steps.size() >= 2) {
      const Matrix cos = cosine_matrix(trace, layer);
      write_matrix_csv(dir / (layer + ".cosine.csv"), cos);
      std::ofstream os(dir / (layer + ".saturation.csv"));
      os << "step,index\n";
      const auto idx = saturation_index(cos);
      char buf[32];
      for (std::size_t i = 0; i < idx.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", idx[i]);
        os << trace.checkpoint_steps[i] << ',' << buf << '\n';
      }
    }
    write_matrix_csv(dir / (layer + ".grad_spectrum.csv"),
                     spectrum_over_time(trace, layer, SpectrumTarget::kGradient));
    write_matrix_csv(dir / (layer + ".weight_spectrum.csv"),
                     spectrum_over_time(trace, layer, SpectrumTarget::kWeight));
    if (full_gradients) {
      const auto& grads = trace.gradients.at(layer);
      for (std::size_t i = 0; i < grads.size(); ++i)
        write_matrix_csv(dir / (layer + ".grad_step" + std::to_string(trace.checkpoint_steps[i]) + ".csv"),
                         grads[i]);
    }
  }
}

}  // namespace welore
