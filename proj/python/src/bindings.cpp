// Python bindings. Errors map onto built-in exception types by category:
// missing input -> FileNotFoundError, configuration -> ValueError, anything
// else -> RuntimeError.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "cpr/conformal.hpp"
#include "cpr/embed.hpp"
#include "cpr/error.hpp"
#include "cpr/eval.hpp"
#include "cpr/hints.hpp"
#include "cpr/pipeline.hpp"
#include "cpr/puct.hpp"
#include "cpr/rcvnet.hpp"
#include "cpr/synth.hpp"

namespace py = pybind11;
using namespace cpr;

namespace {

py::dict row_dict(const MetricsRow& r) {
  py::dict d;
  d["alpha"] = r.alpha;
  d["ecr"] = r.ecr;
  d["apss"] = r.apss;
  d["coverage_efficiency"] = r.coverage_efficiency ? py::cast(*r.coverage_efficiency) : py::none();
  d["valid"] = r.valid;
  d["n_test"] = r.n_test;
  d["reachability"] = r.reachability;
  return d;
}

py::list rows_list(const std::vector<MetricsRow>& rows) {
  py::list out;
  for (const MetricsRow& r : rows) out.append(row_dict(r));
  return out;
}

SynthConfig synth_config(const py::dict& kw) {
  SynthConfig c;
  for (auto [k, v] : kw) {
    const auto key = k.cast<std::string>();
    if (key == "n_entities") c.n_entities = v.cast<std::size_t>();
    else if (key == "n_relations") c.n_relations = v.cast<std::size_t>();
    else if (key == "n_queries") c.n_queries = v.cast<std::size_t>();
    else if (key == "min_hop") c.min_hop = v.cast<std::size_t>();
    else if (key == "max_hop") c.max_hop = v.cast<std::size_t>();
    else if (key == "branching") c.branching = v.cast<double>();
    else if (key == "answer_multiplicity") c.answer_multiplicity = v.cast<std::size_t>();
    else if (key == "confusability") c.confusability = v.cast<double>();
    else if (key == "shared_intermediates") c.shared_intermediates = v.cast<bool>();
    else if (key == "seed") c.seed = v.cast<std::uint64_t>();
    else throw ConfigError("unknown synth option '" + key + "'");
  }
  return c;
}

ScalarFeatures features_of(const std::tuple<double, double, double>& x) {
  return {std::get<0>(x), std::get<1>(x), std::get<2>(x)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conformal path reasoning over knowledge graphs";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.category()) {
        case ErrorCategory::MissingInput: PyErr_SetString(PyExc_FileNotFoundError, e.what()); return;
        case ErrorCategory::Config: PyErr_SetString(PyExc_ValueError, e.what()); return;
        case ErrorCategory::Runtime: PyErr_SetString(PyExc_RuntimeError, e.what()); return;
      }
    }
  });

  // Text similarity.
  m.def("tokenize", &tokenize, py::arg("text"));
  m.def("hash_embed", &hash_embed, py::arg("text"), py::arg("dim"), py::arg("seed"));
  m.def("similarity", [](const std::vector<double>& a, const std::vector<double>& b) { return similarity(a, b); });

  // Search statistics.
  m.def("softmax", [](const std::vector<double>& s) { return softmax(s); });
  m.def(
      "puct_select",
      [](const std::vector<std::uint32_t>& candidates, const std::vector<double>& prior,
         const std::vector<std::pair<std::uint32_t, double>>& stats, double c_puct) {
        std::vector<RelationId> c;
        for (auto id : candidates) c.push_back(RelationId{id});
        std::vector<EdgeStats> s;
        for (auto [n, w] : stats) s.push_back({n, w});
        return puct_select(c, prior, s, c_puct).value;
      },
      py::arg("candidates"), py::arg("prior"), py::arg("stats"), py::arg("c_puct") = 2.0,
      "stats holds (visits, cumulative reward) per candidate; returns the chosen id");
  m.def("beta_mean", [](double a, double b) { return a / (a + b); });

  // Value network.
  m.def("v_sem", [](const std::tuple<double, double, double>& x) { return v_sem(features_of(x)); });
  m.def("pair_loss", &pair_loss, py::arg("v_pos"), py::arg("v_neg"));
  m.def("film_modulate", [](const std::vector<double>& h, const std::vector<double>& g, const std::vector<double>& b) {
    return film_modulate(h, g, b);
  });
  py::class_<RcvnetParams>(m, "RcvnetParams")
      .def_static(
          "initialize",
          [](std::size_t embed_dim, std::size_t width, std::uint64_t seed) {
            return RcvnetParams::initialize({embed_dim, width}, seed);
          },
          py::arg("embed_dim"), py::arg("width"), py::arg("seed"))
      .def_static("load", [](const std::string& path) { return load_params_file(path); })
      .def("save", [](const RcvnetParams& p, const std::string& path) { save_params_file(path, p); })
      .def_property_readonly("embed_dim", [](const RcvnetParams& p) { return p.shape().embed_dim; })
      .def_property_readonly("width", [](const RcvnetParams& p) { return p.shape().width; })
      .def("__len__", &RcvnetParams::size)
      .def("forward", [](const RcvnetParams& p, const std::tuple<double, double, double>& x,
                         const std::vector<double>& c) { return forward(p, features_of(x), c); });

  // Conformal calibration and metrics.
  m.attr("INF") = kInf;
  m.def("conformal_rank", &conformal_rank, py::arg("n"), py::arg("alpha"));
  m.def(
      "calibrate",
      [](const std::vector<double>& values, double alpha) {
        std::vector<NonconformityScore> scores;
        for (std::size_t i = 0; i < values.size(); ++i) scores.push_back({std::to_string(i), values[i]});
        const Threshold t = calibrate(std::move(scores), alpha);
        py::dict d;
        d["alpha"] = t.alpha;
        d["n_cal"] = t.n_cal;
        d["k"] = t.k;
        d["tau"] = t.tau;
        return d;
      },
      py::arg("scores"), py::arg("alpha"));
  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>())
      .def("uniform", &Rng::uniform)
      .def("normal", &Rng::normal)
      .def("uniform_index", &Rng::uniform_index);
  m.def(
      "coverage_trial",
      [](py::function sampler, std::size_t n_cal, double alpha, std::size_t trials, std::uint64_t seed,
         std::size_t workers) {
        // The generator must reach Python by reference; a copy would repeat
        // the same draw forever. Capturing a pointer keeps worker-thread
        // copies of the closure away from Python reference counts.
        const py::function* fn = &sampler;
        const ScoreSampler draw = [fn](Rng& rng) {
          py::gil_scoped_acquire gil;
          return (*fn)(py::cast(&rng, py::return_value_policy::reference)).cast<double>();
        };
        py::gil_scoped_release release;
        return coverage_trial(draw, n_cal, alpha, trials, seed, workers);
      },
      py::arg("sampler"), py::arg("n_cal"), py::arg("alpha"), py::arg("trials"), py::arg("seed"),
      py::arg("workers") = 1, "sampler(rng) -> float draws one score");
  m.def("coverage_efficiency", &coverage_efficiency, py::arg("ecr"), py::arg("apss"));
  m.def("default_alphas", &default_alphas);

  // Relation hints.
  m.def("parse_hint_json", &parse_hint_json, py::arg("text"));
  m.def("flatten_hints", &flatten_hints, py::arg("chains"));
  m.def("hint_prompt", &hint_prompt, py::arg("question"), py::arg("max_hop"));

  // Synthetic benchmark.
  m.def(
      "synth_generate",
      [](const py::kwargs& kw) {
        const SynthDataset ds = generate(synth_config(kw));
        const SynthReport rep = verify(ds.graph, ds.queries, ds.gold_paths, ds.config.max_hop);
        std::ostringstream graph, queries, manifest;
        ds.graph.write_tsv(graph);
        write_queries(queries, ds.graph, ds.queries);
        write_manifest(manifest, ds, rep);
        py::dict d;
        d["graph_tsv"] = graph.str();
        d["queries_jsonl"] = queries.str();
        d["manifest_json"] = manifest.str();
        d["reachability"] = rep.reachability;
        d["depth_histogram"] = rep.depth_histogram;
        d["confusability_estimate"] = rep.confusability_estimate;
        d["ok"] = rep.ok;
        return d;
      },
      "Generates a dataset from keyword options and verifies it.");

  // Pipeline.
  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static(
          "from_file",
          [](const std::string& path) {
            RunConfig c;
            load_config_file(path, c);
            return c;
          },
          py::arg("path"))
      .def("set", &RunConfig::set, py::arg("key"), py::arg("value"))
      .def("items", &RunConfig::items)
      .def("fingerprint", &RunConfig::fingerprint)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("out_dir", &RunConfig::out_dir)
      .def_readwrite("workers", &RunConfig::workers);

  auto phase = [&m](const char* name, void (*fn)(const RunConfig&)) {
    m.def(name, fn, py::arg("config"), py::call_guard<py::gil_scoped_release>());
  };
  phase("phase_synth", &phase_synth);
  phase("phase_collect", &phase_collect);
  phase("phase_train", &phase_train);
  phase("phase_calibrate", &phase_calibrate);
  m.def("phase_retrieve", &phase_retrieve, py::arg("config"), py::arg("split"),
        py::call_guard<py::gil_scoped_release>());
  m.def("phase_evaluate", [](const RunConfig& c) {
    std::vector<MetricsRow> rows;
    {
      py::gil_scoped_release release;
      rows = phase_evaluate(c);
    }
    return rows_list(rows);
  });
  m.def("phase_e2e", [](const RunConfig& c) {
    std::vector<MetricsRow> rows;
    {
      py::gil_scoped_release release;
      rows = phase_e2e(c);
    }
    return rows_list(rows);
  });
}
