#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "emovec/config.hpp"
#include "emovec/param_store.hpp"
#include "emovec/pipeline.hpp"
#include "emovec/speaker_embed.hpp"
#include "emovec/vector_arith.hpp"

namespace py = pybind11;
using namespace emovec;

namespace {

py::array_t<float> to_array(const TensorEntry& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> a(shape);
  std::memcpy(a.mutable_data(), t.data().data(), t.size() * sizeof(float));
  return a;
}

TensorEntry from_array(const std::string& name, const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<float> data(a.data(), a.data() + a.size());
  return TensorEntry(name, std::move(shape), std::move(data));
}

py::dict stats_dict(const TensorStats& s) {
  py::dict d;
  d["name"] = s.name;
  d["count"] = s.count;
  d["l2"] = s.l2;
  d["max_abs"] = s.max_abs;
  d["near_zero_fraction"] = s.near_zero_fraction;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "emotion-vector task arithmetic core";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::class_<ParameterSet>(m, "ParameterSet")
      .def(py::init<>())
      .def_static("load", [](const std::filesystem::path& p) { return load(p); }, py::arg("path"))
      .def_static(
          "decode",
          [](const py::bytes& b) {
            const std::string s = b;
            return decode_checkpoint(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
          },
          py::arg("data"))
      .def("save", [](const ParameterSet& s, const std::filesystem::path& p) { save(s, p); }, py::arg("path"))
      .def("encode",
           [](const ParameterSet& s) {
             const auto bytes = encode_checkpoint(s);
             return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
           })
      .def("insert", [](ParameterSet& s, const std::string& name, const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
        s.insert(from_array(name, a));
      }, py::arg("name"), py::arg("values"))
      .def("tensor", [](const ParameterSet& s, const std::string& name) { return to_array(s.at(name)); }, py::arg("name"))
      .def("names",
           [](const ParameterSet& s) {
             std::vector<std::string> out;
             for (const auto& [n, t] : s.tensors()) out.push_back(n);
             return out;
           })
      .def_property_readonly("meta", [](const ParameterSet& s) { return s.meta(); })
      .def("set_meta", &ParameterSet::set_meta, py::arg("key"), py::arg("value"))
      .def("content_hash", [](const ParameterSet& s) { return content_hash(s); })
      .def("__len__", [](const ParameterSet& s) { return s.tensors().size(); })
      .def("__eq__", [](const ParameterSet& a, const ParameterSet& b) { return a == b; });

  py::class_<EmotionVector>(m, "EmotionVector")
      .def(py::init<ParameterSet>(), py::arg("params"))
      .def_property_readonly("params", &EmotionVector::params)
      .def_property_readonly("label", &EmotionVector::label)
      .def_property_readonly("scope", [](const EmotionVector& v) {
        return v.scope() == VectorScope::speaker_agnostic ? "speaker-agnostic" : "single-speaker";
      })
      .def_property_readonly("source_emo", &EmotionVector::source_emo)
      .def_property_readonly("source_pre", &EmotionVector::source_pre)
      .def("content_hash", &EmotionVector::hash)
      .def("__eq__", [](const EmotionVector& a, const EmotionVector& b) { return a == b; });

  m.def("extract_vector", &extract_vector, py::arg("emo"), py::arg("pre"), py::arg("label"),
        "emotion vector = fine-tuned - pretrained");
  m.def("apply_vector", &apply_vector, py::arg("target"), py::arg("vector"), py::arg("alpha"),
        "target + alpha * vector");
  m.def(
      "vector_stats",
      [](const ParameterSet& s) {
        const auto st = vector_stats(s);
        py::list tensors;
        for (const auto& t : st.tensors) tensors.append(stats_dict(t));
        py::dict d;
        d["tensors"] = tensors;
        d["global"] = stats_dict(st.global);
        return d;
      },
      py::arg("params"));
  m.def(
      "secs", [](std::vector<double> a, std::vector<double> b) { return secs({std::move(a)}, {std::move(b)}); },
      py::arg("a"), py::arg("b"), "cosine similarity of two speaker embeddings");

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& config, const std::filesystem::path& out, std::optional<std::string> only) {
        std::optional<ScenarioCase> filter;
        if (only) filter = parse_scenario_case(*only);
        std::vector<std::string> reports;
        {
          py::gil_scoped_release release;
          Pipeline p(ExperimentConfig::load(config), out);
          for (const auto& r : p.run_all(filter)) reports.push_back(report_to_json(r));
        }
        return reports;
      },
      py::arg("config"), py::arg("out"), py::arg("case") = py::none(),
      "run every configured scenario; returns the report JSON texts");
}
