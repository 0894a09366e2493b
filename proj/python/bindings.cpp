// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "welore/checkpoint.hpp"
#include "welore/corpus.hpp"
#include "welore/error.hpp"
#include "welore/factorizer.hpp"
#include "welore/rank_plan.hpp"
#include "welore/spectrum.hpp"
#include "welore/svd.hpp"
#include "welore/train.hpp"

namespace py = pybind11;
using namespace welore;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::kDimension, "expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  if (m.size() > 0) std::memcpy(m.data().data(), a.data(), m.size() * sizeof(double));
  return m;
}

Array to_array(const Matrix& m) {
  Array a({m.rows(), m.cols()});
  if (m.size() > 0) std::memcpy(a.mutable_data(), m.data().data(), m.size() * sizeof(double));
  return a;
}

py::dict report_dict(const CompressionReport& r) {
  py::list layers;
  for (const auto& l : r.layers) {
    py::dict d;
    d["layer"] = l.layer;
    d["class"] = std::string(to_string(l.cls));
    d["full_rank"] = l.full_rank;
    d["rank"] = l.rank;
    d["abs_error"] = l.abs_error;
    d["rel_error"] = l.rel_error;
    d["params_before"] = l.params_before;
    d["params_after"] = l.params_after;
    layers.append(d);
  }
  py::dict out;
  out["layers"] = layers;
  out["original_params"] = r.original_params;
  out["compressed_params"] = r.compressed_params;
  out["param_ratio"] = r.param_ratio;
  return out;
}

}  // namespace

PYBIND11_MODULE(_welore, m) {
  m.doc() = "Adaptive low-rank compression of decoder weights";

  static py::exception<Error> error(m, "WeloreError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object code = py::str(std::string(to_string(e.code())));
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(py::str(e.what()));
      exc.attr("code") = code;
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def(
      "svd",
      [](const Array& w) {
        const SvdResult s = svd(to_matrix(w));
        return py::make_tuple(to_array(s.u), s.sigma, to_array(s.vt));
      },
      py::arg("w"), "Thin SVD: (u, sigma, vt) with sigma non-increasing.");
  m.def(
      "truncate",
      [](const Array& w, std::size_t rank) {
        const LowRankFactors f = truncate(svd(to_matrix(w)), rank);
        return py::make_tuple(to_array(f.a), to_array(f.b));
      },
      py::arg("w"), py::arg("rank"), "Best rank-r factors (a, b) with w ~= a @ b.");
  m.def(
      "whitened_truncate",
      [](const Array& w, const Array& second_moment, std::size_t rank) {
        const LowRankFactors f = whitened_truncate(to_matrix(w), to_matrix(second_moment), rank);
        return py::make_tuple(to_array(f.a), to_array(f.b));
      },
      py::arg("w"), py::arg("second_moment"), py::arg("rank"));
  m.def(
      "activation_error",
      [](const Array& w, const Array& a, const Array& b, const Array& second_moment) {
        return activation_error(to_matrix(w), to_matrix(a), to_matrix(b), to_matrix(second_moment));
      },
      py::arg("w"), py::arg("a"), py::arg("b"), py::arg("second_moment"));

  py::class_<SpectrumReport>(m, "SpectrumReport")
      .def_readonly("layer_name", &SpectrumReport::layer_name)
      .def_readonly("values", &SpectrumReport::values)
      .def_readonly("full_rank", &SpectrumReport::full_rank)
      .def_readonly("degenerate", &SpectrumReport::degenerate)
      .def("energy_at", [](const SpectrumReport& r, double f) { return tail_stats(r).energy_at(f); })
      .def("effective_rank_at",
           [](const SpectrumReport& r, double t) { return tail_stats(r).effective_rank_at(t); });
  m.def(
      "analyze", [](const Array& w, std::string name) { return analyze(to_matrix(w), std::move(name)); },
      py::arg("w"), py::arg("name") = "");
  m.def("normalize_spectrum", &normalize_spectrum, py::arg("sigma"), py::arg("name") = "");

  py::class_<PlanEntry>(m, "PlanEntry")
      .def_readonly("layer", &PlanEntry::layer)
      .def_readonly("full_rank", &PlanEntry::full_rank)
      .def_readonly("rank", &PlanEntry::rank)
      .def_property_readonly("cls", [](const PlanEntry& e) { return std::string(to_string(e.cls)); });
  py::class_<RankPlan>(m, "RankPlan")
      .def_readonly("threshold_k", &RankPlan::threshold_k)
      .def_readonly("target_err", &RankPlan::target_err)
      .def_readonly("achieved_err", &RankPlan::achieved_err)
      .def_readonly("exact", &RankPlan::exact)
      .def_readonly("entries", &RankPlan::entries)
      .def("to_json", &plan_to_json)
      .def_static("from_json", [](const std::string& s) { return plan_from_json(s); })
      .def("__eq__", [](const RankPlan& a, const RankPlan& b) { return a == b; });
  m.def(
      "search_threshold",
      [](const std::vector<SpectrumReport>& reports, double err, double tol, double step) {
        return search_threshold(reports, {err, tol, step});
      },
      py::arg("reports"), py::arg("err") = 0.5, py::arg("tol") = 0.01, py::arg("step") = 0.005);
  m.def("plan_for_threshold", &plan_for_threshold, py::arg("reports"), py::arg("k"));

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("n_layers", &ModelConfig::n_layers)
      .def_readwrite("n_heads", &ModelConfig::n_heads)
      .def_readwrite("d_ff", &ModelConfig::d_ff)
      .def_readwrite("max_seq", &ModelConfig::max_seq)
      .def_readonly("vocab", &ModelConfig::vocab);

  py::class_<Model>(m, "Model")
      .def_readonly("config", &Model::config)
      .def_property_readonly("param_count", &Model::param_count)
      .def("projection_names",
           [](const Model& model) {
             std::vector<std::string> names;
             for (const auto* p : model.projections()) names.push_back(p->name);
             return names;
           })
      .def("weight", [](const Model& model, const std::string& name) {
        const Projection* p = model.find_projection(name);
        if (!p) throw Error(ErrorCode::kInvalidArgument, "no projection '" + name + "'");
        return to_array(p->materialize());
      })
      .def("save", [](const Model& model, const std::string& path) { save_file(model, path); })
      .def("to_bytes", [](const Model& model) {
        const auto b = save(model);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      });

  m.def("init_model", &init_model, py::arg("config"), py::arg("seed") = 0);
  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        LoadResult r = load_file(path);
        if (!r.checksum_ok) PyErr_WarnEx(PyExc_RuntimeWarning, r.warning.c_str(), 1);
        return r.model;
      },
      py::arg("path"));
  m.def("analyze_model", &analyze_model, py::arg("model"));
  m.def(
      "compress",
      [](const Model& model, const RankPlan& plan, bool force_nlrc_truncate) {
        CompressResult r = compress(model, plan, {force_nlrc_truncate});
        return py::make_tuple(std::move(r.model), report_dict(r.report));
      },
      py::arg("model"), py::arg("plan"), py::arg("force_nlrc_truncate") = false);
  m.def(
      "perplexity",
      [](const Model& model, const std::string& text, std::size_t seq_len, std::size_t max_tokens) {
        return perplexity(model, Corpus::from_text(text), seq_len == 0 ? model.config.max_seq : seq_len,
                          max_tokens);
      },
      py::arg("model"), py::arg("text"), py::arg("seq_len") = 0, py::arg("max_tokens") = 8192);
  m.def(
      "finetune",
      [](const Model& model, const std::string& text, const std::string& mode, std::size_t steps,
         double lr, std::size_t batch, std::size_t seq_len, std::uint64_t seed) {
        FinetuneMode fm;
        fm.kind = finetune_kind_from_string(mode);
        TrainConfig c;
        c.steps = steps;
        c.lr = lr;
        c.batch = batch;
        c.seq_len = seq_len;
        c.seed = seed;
        c.eval_tokens = 1024;
        TrainRun run;
        {
          py::gil_scoped_release release;
          run = finetune(model, Corpus::from_text(text), fm, c);
        }
        py::dict d;
        std::vector<double> losses;
        for (const auto& r : run.log) losses.push_back(r.loss);
        d["losses"] = losses;
        d["trainable_params"] = run.trainable_params;
        d["optimizer_state_elements"] = run.optimizer_state_elements;
        return py::make_tuple(std::move(run.model), d);
      },
      py::arg("model"), py::arg("text"), py::arg("mode") = "lrc", py::arg("steps") = 100,
      py::arg("lr") = 1e-3, py::arg("batch") = 4, py::arg("seq_len") = 64, py::arg("seed") = 0);
  m.def(
      "synthetic_text",
      [](std::size_t bytes, std::uint64_t seed, const std::string& style) {
        if (style != "prose" && style != "records")
          throw Error(ErrorCode::kInvalidArgument, "style must be prose or records");
        return py::bytes(synthetic_text(bytes, seed,
                                        style == "prose" ? CorpusStyle::kProse : CorpusStyle::kRecords));
      },
      py::arg("bytes"), py::arg("seed") = 1, py::arg("style") = "prose");
  m.def("llama2_7b_dense_params", [] { return llama2_7b_shape().dense_params(); });
  m.def(
      "llama2_7b_planned_params",
      [](const RankPlan& plan, bool force) { return planned_params(llama2_7b_shape(), plan, {force}); },
      py::arg("plan"), py::arg("force_nlrc_truncate") = false);
  m.def("llama2_7b_layers", [] {
    std::vector<py::tuple> out;
    for (const auto& l : llama2_7b_shape().projection_layers())
      out.push_back(py::make_tuple(l.name, l.rows, l.cols));
    return out;
  });
}
