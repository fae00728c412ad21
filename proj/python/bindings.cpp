// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oocd/classifier.hpp"
#include "oocd/config.hpp"
#include "oocd/corpus.hpp"
#include "oocd/error.hpp"
#include "oocd/features.hpp"
#include "oocd/fixture.hpp"
#include "oocd/metrics.hpp"
#include "oocd/pca.hpp"
#include "oocd/pipeline.hpp"
#include "oocd/report.hpp"
#include "oocd/similarity.hpp"
#include "oocd/store.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Python exception classes by error code, filled at import.
std::map<std::string, py::object>& error_classes() {
  static auto* classes = new std::map<std::string, py::object>();
  return *classes;
}

py::object to_python(const json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

json from_python(const py::object& o) {
  if (o.is_none()) return json::object();
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::span<const double> flat(const DoubleArray& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

std::vector<oocd::Label> labels_from(const std::vector<int>& values) {
  std::vector<oocd::Label> out;
  out.reserve(values.size());
  for (int v : values) out.push_back(oocd::label_from_int(v));
  return out;
}

oocd::Artifact parse_artifact(const std::string& name) {
  if (name == "image") return oocd::Artifact::kImage;
  if (name == "caption") return oocd::Artifact::kCaption;
  if (name == "generated_image") return oocd::Artifact::kGeneratedImage;
  if (name == "generated_caption") return oocd::Artifact::kGeneratedCaption;
  throw py::value_error("unknown artifact '" + name +
                        "' (image, caption, generated_image, generated_caption)");
}

oocd::FeatureMode parse_mode(const std::string& name) {
  const auto m = oocd::parse_feature_mode(name);
  if (!m) throw oocd::ConfigError("unknown feature mode '" + name + "'");
  return *m;
}

oocd::Aggregation parse_agg(const std::string& name) {
  const auto a = oocd::parse_aggregation(name);
  if (!a) throw oocd::ConfigError("unknown aggregation '" + name + "'");
  return *a;
}

std::vector<oocd::FeatureVector> rows_from(const Eigen::MatrixXd& x,
                                           const std::optional<std::vector<int>>& y,
                                           oocd::FeatureMode mode, oocd::ChannelSet channels) {
  if (y && y->size() != static_cast<std::size_t>(x.rows())) {
    throw oocd::LengthMismatch("labels and rows differ in length");
  }
  std::vector<oocd::FeatureVector> rows(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto& r = rows[static_cast<std::size_t>(i)];
    r.sample_id = "row" + std::to_string(i);
    r.mode = mode;
    r.channels = channels;
    r.values.resize(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) r.values[static_cast<std::size_t>(j)] = x(i, j);
    if (y) r.label = oocd::label_from_int((*y)[static_cast<std::size_t>(i)]);
  }
  return rows;
}

py::dict sample_dict(const oocd::Sample& s) {
  py::dict d;
  d["id"] = s.id;
  d["image_path"] = s.image_path.string();
  d["caption"] = s.caption;
  d["label"] = oocd::to_int(s.label);
  d["split"] = std::string(oocd::to_string(s.split));
  return d;
}

py::dict counters_dict(const oocd::PipelineCounters& c) {
  py::dict d;
  d["caption_calls"] = c.caption_calls;
  d["image_calls"] = c.image_calls;
  d["encoder_invocations"] = c.encoder_invocations;
  d["generation_cache_hits"] = c.generation_cache_hits;
  d["embedding_records_skipped"] = c.embedding_records_skipped;
  d["models_trained"] = c.models_trained;
  d["models_reused"] = c.models_reused;
  return d;
}

void bind_errors(py::module_& m) {
  py::object base = py::exception<oocd::Error>(m, "Error", PyExc_RuntimeError);
  error_classes()["Error"] = base;
  for (const char* code :
       {"ParseError", "MissingImage", "InsufficientSamples", "IoError", "BackendUnavailable",
        "GenerationFailed", "ProtocolError", "EncoderFailure", "DimensionMismatch",
        "StoreCorrupt", "ZeroVector", "LengthMismatch", "MissingRecord",
        "DegenerateCovariance", "SingleClassData", "NonFiniteFeature", "ShapeMismatch",
        "ModelFormatError", "EmptyInput", "SingleClassTruth", "ConfigError",
        "MissingArtifact", "TooManyFailures"}) {
    py::object cls = py::reinterpret_steal<py::object>(PyErr_NewException(
        (std::string("oocd._core.") + code).c_str(), base.ptr(), nullptr));
    m.attr(code) = cls;
    error_classes()[code] = cls;
  }
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const oocd::Error& e) {
      const auto it = error_classes().find(e.code());
      py::object cls = it != error_classes().end() ? it->second : error_classes()["Error"];
      py::object err = cls(e.what());
      err.attr("code") = e.code();
      err.attr("exit_code") = oocd::exit_code_for(e);
      PyErr_SetObject(cls.ptr(), err.ptr());
    }
  });
}

void bind_metrics(py::module_& m) {
  m.def("cosine", [](const DoubleArray& u, const DoubleArray& v) {
    return oocd::cosine(flat(u), flat(v));
  }, py::arg("u"), py::arg("v"), "Cosine similarity of two vectors.");
  m.def("accuracy", [](const std::vector<int>& predictions, const std::vector<int>& truth) {
    const auto p = labels_from(predictions), t = labels_from(truth);
    return oocd::accuracy(p, t);
  }, py::arg("predictions"), py::arg("truth"), "Accuracy in percent; 1 is falsified.");
  m.def("auc", [](const DoubleArray& scores, const std::vector<int>& truth) {
    const auto t = labels_from(truth);
    return oocd::auc(flat(scores), t);
  }, py::arg("scores"), py::arg("truth"), "ROC AUC in percent of falsified scores.");
  m.def("threshold_classify", [](const std::array<double, 3>& sims,
                                 const std::array<double, 3>& thresholds,
                                 const std::string& aggregation) {
    const oocd::SimilarityTriple t{"", sims[0], sims[1], sims[2]};
    return oocd::to_int(oocd::threshold_classify(t, thresholds, parse_agg(aggregation)));
  }, py::arg("sims"), py::arg("thresholds"), py::arg("aggregation") = "all",
     "Label (0 pristine, 1 falsified) of a (clip, sbert, vit) similarity triple.");
  m.def("fit_thresholds", [](const Eigen::MatrixXd& sims, const std::vector<int>& labels,
                             const std::string& aggregation) {
    if (sims.cols() != 3) throw oocd::ShapeMismatch("similarities must have 3 columns");
    std::vector<oocd::SimilarityTriple> triples;
    for (Eigen::Index i = 0; i < sims.rows(); ++i) {
      triples.push_back({"", sims(i, 0), sims(i, 1), sims(i, 2)});
    }
    return oocd::fit_thresholds(triples, labels_from(labels), parse_agg(aggregation));
  }, py::arg("sims"), py::arg("labels"), py::arg("aggregation") = "all");
  m.def("expected_feature_length", [](const std::string& mode, const std::string& channels) {
    return oocd::expected_feature_length(parse_mode(mode), oocd::ChannelSet::parse(channels));
  }, py::arg("mode"), py::arg("channels"));
}

void bind_corpus(py::module_& m) {
  m.def("load_annotations", [](const fs::path& path, const fs::path& image_root, bool strict,
                               bool check_images) {
    const auto r = oocd::load_annotations(path, image_root, {strict, check_images});
    py::list samples, issues;
    for (const auto& s : r.samples) samples.append(sample_dict(s));
    for (const auto& i : r.issues) issues.append(py::make_tuple(i.line, i.code, i.detail));
    return py::make_tuple(samples, issues);
  }, py::arg("path"), py::arg("image_root"), py::arg("strict") = false,
     py::arg("check_images") = true, "Returns (samples, issues).");
  m.def("write_fixture", [](const fs::path& dir, std::size_t samples, std::uint64_t seed) {
    oocd::FixtureOptions opt;
    opt.samples = samples;
    opt.seed = seed;
    const auto info = oocd::write_fixture(dir, opt);
    py::dict d;
    d["config"] = info.config.string();
    d["annotations"] = info.annotations.string();
    d["planted"] = info.planted.string();
    d["samples"] = info.samples;
    return d;
  }, py::arg("dir"), py::arg("samples") = 200, py::arg("seed") = 0,
     "Writes a mock corpus with planted vectors and its config.json.");
}

void bind_store(py::module_& m) {
  py::class_<oocd::EmbeddingStore>(m, "EmbeddingStore")
      .def(py::init([](const fs::path& dir) {
        return std::make_unique<oocd::EmbeddingStore>(oocd::EmbeddingStore::open(dir));
      }), py::arg("dir"))
      .def("ensure_partition", &oocd::EmbeddingStore::ensure_partition,
           py::arg("encoder_id"), py::arg("dim"))
      .def("partition_dim", &oocd::EmbeddingStore::partition_dim, py::arg("encoder_id"))
      .def("partitions", &oocd::EmbeddingStore::partitions)
      .def("put", [](oocd::EmbeddingStore& s, const std::string& sample_id,
                     const std::string& artifact, const std::string& encoder_id,
                     const FloatArray& vector) {
        oocd::EmbeddingRecord r{sample_id, parse_artifact(artifact), encoder_id,
                                std::vector<float>(vector.data(), vector.data() + vector.size())};
        return s.put(r);
      }, py::arg("sample_id"), py::arg("artifact"), py::arg("encoder_id"), py::arg("vector"))
      .def("get", [](const oocd::EmbeddingStore& s, const std::string& sample_id,
                     const std::string& artifact, const std::string& encoder_id) -> py::object {
        const auto v = s.get(sample_id, parse_artifact(artifact), encoder_id);
        if (!v) return py::none();
        return FloatArray(static_cast<py::ssize_t>(v->size()), v->data());
      }, py::arg("sample_id"), py::arg("artifact"), py::arg("encoder_id"))
      .def("contains", [](const oocd::EmbeddingStore& s, const std::string& sample_id,
                          const std::string& artifact, const std::string& encoder_id) {
        return s.contains(sample_id, parse_artifact(artifact), encoder_id);
      }, py::arg("sample_id"), py::arg("artifact"), py::arg("encoder_id"))
      .def("count", &oocd::EmbeddingStore::count, py::arg("encoder_id"))
      .def("__len__", &oocd::EmbeddingStore::size)
      .def("flush", &oocd::EmbeddingStore::flush)
      .def_property_readonly("dir", [](const oocd::EmbeddingStore& s) { return s.dir().string(); });
}

void bind_models(py::module_& m) {
  m.def("reduce_dimensions", [](const Eigen::MatrixXd& x, Eigen::Index k) {
    const auto fit = oocd::reduce_dimensions(x, k);
    py::dict d;
    d["mean"] = fit.projection.mean;
    d["components"] = fit.projection.components;
    d["explained_variance"] = fit.projection.explained_variance;
    d["transformed"] = fit.transformed;
    d["warnings"] = fit.warnings;
    return d;
  }, py::arg("x"), py::arg("k"), "Principal-component projection fitted on the rows of x.");

  using Model = std::shared_ptr<oocd::TrainedModel>;
  py::class_<oocd::TrainedModel, Model>(m, "Model")
      .def_property_readonly("kind", [](const oocd::TrainedModel& t) {
        return std::string(oocd::to_string(t.spec.kind));
      })
      .def_property_readonly("input_dim", [](const oocd::TrainedModel& t) { return t.input_dim; })
      .def_property_readonly("manifest", [](const oocd::TrainedModel& t) {
        return to_python(t.manifest);
      })
      .def("scores", [](const oocd::TrainedModel& t, const Eigen::MatrixXd& x) {
        return Eigen::VectorXd(t.scores(x));
      }, py::arg("x"), "Probability of falsified for each row.")
      .def("predict", [](const oocd::TrainedModel& t, const Eigen::MatrixXd& x) {
        const Eigen::VectorXd s = t.scores(x);
        std::vector<int> out;
        for (Eigen::Index i = 0; i < s.size(); ++i) {
          out.push_back(oocd::to_int(oocd::label_for_score(s(i))));
        }
        return out;
      }, py::arg("x"))
      .def("save", [](const oocd::TrainedModel& t, const fs::path& dir) {
        oocd::save_model(t, dir);
      }, py::arg("dir"))
      .def_static("load", [](const fs::path& dir) {
        return std::make_shared<oocd::TrainedModel>(oocd::load_model(dir));
      }, py::arg("dir"));

  m.def("train", [](const std::string& kind, const Eigen::MatrixXd& x_train,
                    const std::vector<int>& y_train, std::optional<Eigen::MatrixXd> x_val,
                    std::optional<std::vector<int>> y_val, const std::string& mode,
                    const std::string& channels, std::uint64_t seed,
                    const py::object& hyperparameters, std::optional<Eigen::Index> reduce_to) {
    const auto k = oocd::parse_classifier_kind(kind);
    if (!k) throw oocd::ConfigError("unknown classifier kind '" + kind + "'");
    const auto fm = parse_mode(mode);
    const auto cs = oocd::ChannelSet::parse(channels);
    oocd::ClassifierSpec spec;
    spec.kind = *k;
    spec.seed = seed;
    spec.hyperparameters = from_python(hyperparameters);
    const auto train_rows = rows_from(x_train, y_train, fm, cs);
    std::vector<oocd::FeatureVector> val_rows;
    if (x_val) val_rows = rows_from(*x_val, y_val, fm, cs);
    py::gil_scoped_release release;
    return std::make_shared<oocd::TrainedModel>(
        oocd::train(spec.with_defaults(fm), train_rows, val_rows, {reduce_to}));
  }, py::arg("kind"), py::arg("x_train"), py::arg("y_train"), py::arg("x_val") = py::none(),
     py::arg("y_val") = py::none(), py::arg("mode") = "similarity",
     py::arg("channels") = "clip+sbert+vit", py::arg("seed") = 0,
     py::arg("hyperparameters") = py::none(), py::arg("reduce_to") = py::none(),
     "Fits one classifier. Rows must have the width the mode and channels imply.");
}

void bind_pipeline(py::module_& m) {
  py::class_<oocd::Pipeline>(m, "Pipeline")
      .def(py::init([](const fs::path& config, std::optional<std::string> split,
                       std::optional<std::size_t> limit, std::optional<std::uint64_t> seed) {
        oocd::RunOptions opt;
        if (split) {
          opt.split = oocd::parse_split(*split);
          if (!opt.split) throw oocd::ConfigError("unknown split '" + *split + "'");
        }
        opt.limit = limit;
        opt.seed = seed;
        return std::make_unique<oocd::Pipeline>(oocd::PipelineConfig::load(config), opt);
      }), py::arg("config"), py::arg("split") = py::none(), py::arg("limit") = py::none(),
          py::arg("seed") = py::none())
      .def("run", [](oocd::Pipeline& p, const std::string& stage) {
        const auto s = oocd::parse_stage(stage);
        if (!s) throw oocd::ConfigError("unknown stage '" + stage + "'");
        py::gil_scoped_release release;
        p.run(*s);
      }, py::arg("stage") = "all")
      .def("evaluate", [](oocd::Pipeline& p) {
        std::vector<oocd::EvaluationReport> reports;
        {
          py::gil_scoped_release release;
          reports = p.evaluate();
        }
        py::list out;
        for (const auto& r : reports) {
          out.append(to_python(json::parse(oocd::render_report(r, oocd::ReportFormat::kJson))));
        }
        return out;
      }, "Evaluates every configured split; one JSON-shaped report per split.")
      .def("model_names", [](const oocd::Pipeline& p) {
        std::vector<std::string> names;
        for (const auto& plan : p.model_plan()) names.push_back(plan.name);
        return names;
      })
      .def_property_readonly("counters", [](const oocd::Pipeline& p) {
        return counters_dict(p.counters());
      })
      .def_property_readonly("run_dir", [](const oocd::Pipeline& p) {
        return p.run_dir().string();
      })
      .def_property_readonly("config", [](const oocd::Pipeline& p) {
        return to_python(p.config().to_json());
      });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Out-of-context image-caption detection: similarity features and classifiers.";
  bind_errors(m);
  bind_metrics(m);
  bind_corpus(m);
  bind_store(m);
  bind_models(m);
  bind_pipeline(m);
}
