// Python bindings. Structured results (configs, models, reports, manifests)
// cross the boundary as JSON text; the `gamlab` package decodes them.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "gamlab/bench.hpp"
#include "gamlab/dataset.hpp"
#include "gamlab/metrics.hpp"
#include "gamlab/model.hpp"
#include "gamlab/plots.hpp"
#include "gamlab/trainers.hpp"

namespace py = pybind11;
using namespace gamlab;
using nlohmann::json;

namespace {

// pybind11 holders cannot be pointer-to-const; the Python API is read-only.
using RawPtr = std::shared_ptr<RawDataset>;

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a one-dimensional array");
  return {a.data(), a.data() + a.size()};
}

TrainConfig config_of(const std::string& algorithm, const std::string& scale, const std::string& overrides) {
  json j = overrides.empty() ? json::object() : json::parse(overrides);
  j["algorithm"] = algorithm;
  return train_config_from_json(j, scale_from_string(scale));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the gamlab toolkit";
  m.attr("__version__") = kToolkitVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<RawDataset, RawPtr>(m, "Dataset")
      .def_property_readonly("name", [](const RawDataset& d) { return d.name; })
      .def_property_readonly("rows", &RawDataset::rows)
      .def_property_readonly("columns",
                             [](const RawDataset& d) {
                               std::vector<std::string> names;
                               for (const auto& c : d.columns) names.push_back(c.name);
                               return names;
                             })
      .def_property_readonly("labels", [](const RawDataset& d) { return to_array(d.labels); })
      .def_property_readonly("positive_rate", &RawDataset::positive_rate)
      .def("__len__", &RawDataset::rows);

  py::class_<BinnedDataset>(m, "BinnedDataset")
      .def_property_readonly("rows", &BinnedDataset::rows)
      .def_property_readonly("features",
                             [](const BinnedDataset& d) {
                               std::vector<std::string> names;
                               for (const auto& f : d.spec.features) names.push_back(f.name);
                               return names;
                             })
      .def_property_readonly("train_rows", [](const BinnedDataset& d) { return d.split.train; })
      .def_property_readonly("val_rows", [](const BinnedDataset& d) { return d.split.val; })
      .def_property_readonly("test_rows", [](const BinnedDataset& d) { return d.split.test; })
      .def_property_readonly("dataset", [](const BinnedDataset& d) { return std::const_pointer_cast<RawDataset>(d.raw); });

  py::class_<AdditiveModel>(m, "Model")
      .def_readonly("algorithm", &AdditiveModel::algorithm)
      .def_readonly("seed", &AdditiveModel::seed)
      .def_readonly("intercept", &AdditiveModel::intercept)
      .def_property_readonly("features",
                             [](const AdditiveModel& a) {
                               std::vector<std::string> names;
                               for (const auto& s : a.shapes) names.push_back(s.feature);
                               return names;
                             })
      .def("to_json", [](const AdditiveModel& a) { return serialize(a); })
      .def_static("from_json", [](const std::string& text) { return deserialize(text); })
      .def("save", [](const AdditiveModel& a, const std::filesystem::path& p) { save_model(a, p); })
      .def_static("load", [](const std::filesystem::path& p) { return load_model(p); })
      .def("predict_proba", [](const AdditiveModel& a, const RawPtr& d) { return to_array(predict_probas(a, *d)); })
      .def("decision_function",
           [](const AdditiveModel& a, const RawPtr& d) { return to_array(predict_scores(a, *d)); });

  m.def(
      "load_csv",
      [](const std::filesystem::path& path, const std::string& label, const std::vector<std::string>& groups,
         const std::string& schema) {
        CsvOptions o;
        o.label_column = label;
        o.group_columns = groups;
        if (!schema.empty()) o.schema = parse_schema(json::parse(schema));
        return RawPtr(std::make_shared<RawDataset>(load_csv(path, o)));
      },
      py::arg("path"), py::arg("label") = "label", py::arg("groups") = std::vector<std::string>{},
      py::arg("schema") = "");

  m.def(
      "prepare", [](const RawPtr& d, std::uint64_t seed, std::size_t max_bins) { return prepare(d, seed, max_bins); },
      py::arg("dataset"), py::arg("seed") = 0, py::arg("max_bins") = 255);

  m.def("algorithm_names", &algorithm_names);
  m.def(
      "default_config",
      [](const std::string& algorithm, const std::string& scale) {
        return json(TrainConfig::preset(algorithm, scale_from_string(scale))).dump();
      },
      py::arg("algorithm"), py::arg("scale") = "desk");

  m.def(
      "train",
      [](const BinnedDataset& data, const std::string& algorithm, std::uint64_t seed, const std::string& scale,
         const std::string& overrides) {
        const auto cfg = config_of(algorithm, scale, overrides);
        py::gil_scoped_release release;
        return train(data, cfg, seed);
      },
      py::arg("data"), py::arg("algorithm"), py::arg("seed") = 0, py::arg("scale") = "desk",
      py::arg("overrides") = "");

  m.def(
      "evaluate",
      [](const AdditiveModel& a, const BinnedDataset& data, const std::string& split) {
        std::vector<std::size_t> rows;
        if (split == "train") rows = data.split.train;
        else if (split == "val") rows = data.split.val;
        else if (split == "test") rows = data.split.test;
        else if (split == "all") rows = data.split.all();
        else throw std::invalid_argument("unknown split '" + split + "'");
        const auto e = evaluate(a, *data.raw, rows);
        return py::dict(py::arg("n") = e.n, py::arg("auc") = e.auc, py::arg("cross_entropy") = e.cross_entropy);
      },
      py::arg("model"), py::arg("data"), py::arg("split") = "test");

  m.def("auc", [](const py::array_t<double>& s, const py::array_t<double>& t) { return auc(to_vector(s), to_vector(t)); },
        py::arg("scores"), py::arg("labels"));
  m.def(
      "cross_entropy",
      [](const py::array_t<double>& p, const py::array_t<double>& t) { return cross_entropy(to_vector(p), to_vector(t)); },
      py::arg("probabilities"), py::arg("labels"));
  m.def(
      "density_from_errors", [](const py::array_t<double>& e) { return density_from_errors(to_vector(e)); },
      py::arg("errors"));
  m.def(
      "feature_density", [](const AdditiveModel& a, const BinnedDataset& d) { return json(feature_density(a, d)).dump(); },
      py::arg("model"), py::arg("data"));
  m.def("shape_distance", &shape_distance, py::arg("a"), py::arg("b"), py::arg("data"));
  m.def(
      "subgroup_report",
      [](const AdditiveModel& a, const RawPtr& d, const std::string& column, const AdditiveModel* reference) {
        return json(subgroup_report(a, *d, column, reference)).dump();
      },
      py::arg("model"), py::arg("dataset"), py::arg("column"), py::arg("reference") = nullptr);
  m.def(
      "shape_points",
      [](const AdditiveModel& a, const BinnedDataset& d, const std::string& feature) {
        py::list out;
        for (const auto& p : shape_points(a, d, feature))
          out.append(py::make_tuple(p.x, p.value, p.density));
        return out;
      },
      py::arg("model"), py::arg("data"), py::arg("feature"));
  m.def(
      "export_shapes",
      [](const AdditiveModel& a, const BinnedDataset& d, const std::filesystem::path& dir) { export_shapes(a, d, dir); },
      py::arg("model"), py::arg("data"), py::arg("directory"));

  m.def(
      "run_experiment",
      [](const std::filesystem::path& config, std::size_t threads) {
        const auto cfg = load_experiment(config);
        RunOptions o;
        o.threads = threads;
        RunManifest manifest;
        {
          py::gil_scoped_release release;
          manifest = run_experiment(cfg, o);
        }
        return json(manifest).dump();
      },
      py::arg("config"), py::arg("threads") = 1);
}
