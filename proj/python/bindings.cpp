#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "hyperscore/checkpoint.hpp"
#include "hyperscore/commands.hpp"
#include "hyperscore/errors.hpp"
#include "hyperscore/feature_store.hpp"
#include "hyperscore/model.hpp"
#include "hyperscore/stats.hpp"
#include "hyperscore/training.hpp"

namespace py = pybind11;
using namespace hyperscore;

namespace {

using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

py::dict screening_dict(const ScreeningResult& r) {
  py::list rejected;
  for (const auto& x : r.rejected) {
    py::dict d;
    d["subject"] = x.subject;
    d["stage"] = x.stage;
    d["reason"] = x.reason;
    rejected.append(d);
  }
  py::dict out;
  out["retained"] = r.retained;
  out["rejected"] = rejected;
  return out;
}

AnnotationMatrix annotations(const std::string& csv_text, const std::vector<std::string>& sentinels,
                             const std::vector<std::pair<std::string, std::string>>& dups) {
  AnnotationMatrix m = parse_annotations_csv(csv_text);
  m.sentinel_ids = sentinels;
  m.duplicate_pairs = dups;
  return m;
}

struct PyModel {
  HyperScoreModel<float> model;

  Eigen::VectorXf predict(const FeatureBundle& b) const { return predict_all(b, model); }
};

}  // namespace

PYBIND11_MODULE(_hyperscore, m) {
  m.doc() = "hyperscore core bindings";

  auto base = py::register_exception<Error>(m, "HyperScoreError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  // subclasses registered after their parent so the most derived wins
  py::register_exception<DegenerateFeatureError>(m, "DegenerateFeatureError", data.ptr());
  py::register_exception<UndefinedCorrelationError>(m, "UndefinedCorrelationError", data.ptr());

  py::class_<FeatureBundle>(m, "FeatureBundle")
      .def(py::init<>())
      .def_readwrite("sample_id", &FeatureBundle::sample_id)
      .def_readwrite("prompt_id", &FeatureBundle::prompt_id)
      .def_readwrite("method_id", &FeatureBundle::method_id)
      .def_readwrite("eot_index", &FeatureBundle::eot_index)
      .def_property(
          "views",
          [](const FeatureBundle& b) {
            std::vector<RowMatF> out(b.views.begin(), b.views.end());
            return out;
          },
          [](FeatureBundle& b, const std::vector<RowMatF>& v) { b.views.assign(v.begin(), v.end()); })
      .def_property(
          "text_tokens", [](const FeatureBundle& b) { return RowMatF(b.text_tokens); },
          [](FeatureBundle& b, const RowMatF& t) { b.text_tokens = t; })
      .def_property(
          "viewpoints",
          [](const FeatureBundle& b) {
            std::vector<std::pair<float, float>> out;
            for (const auto& v : b.viewpoints) out.emplace_back(v.elevation_deg, v.azimuth_deg);
            return out;
          },
          [](FeatureBundle& b, const std::vector<std::pair<float, float>>& v) {
            b.viewpoints.clear();
            for (const auto& [e, a] : v) b.viewpoints.push_back({e, a});
          })
      .def_property_readonly("dims",
                             [](const FeatureBundle& b) {
                               const auto d = b.dims();
                               return py::make_tuple(d.views, d.patches, d.text_tokens, d.dim);
                             })
      .def("validate", &FeatureBundle::validate);

  m.def(
      "synth_bundle",
      [](std::uint64_t seed, std::uint32_t views, std::uint32_t patches, std::uint32_t text_tokens, std::uint32_t dim) {
        return synth_toy_bundle(seed, FeatureDims{views, patches, text_tokens, dim});
      },
      py::arg("seed"), py::arg("views") = 6, py::arg("patches") = 196, py::arg("text_tokens") = 77,
      py::arg("dim") = 512);
  m.def("load_bundle", &load_feature_bundle, py::arg("path"));
  m.def("write_bundle", &write_feature_bundle, py::arg("bundle"), py::arg("path"));

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const std::string& config_json) {
             return PyModel{HyperScoreModel<float>(model_config_from_json(nlohmann::json::parse(config_json)))};
           }),
           py::arg("config_json") = "{}")
      .def_static(
          "load", [](const std::filesystem::path& p) { return PyModel{load_checkpoint(p).model}; }, py::arg("path"))
      .def(
          "save", [](const PyModel& self, const std::filesystem::path& p) { save_checkpoint(self.model, p); },
          py::arg("path"))
      .def("predict", &PyModel::predict, py::arg("bundle"))
      .def_property_readonly("dimension_names", [](const PyModel& self) { return self.model.config().dimension_names; })
      .def_property_readonly("config_json",
                             [](const PyModel& self) { return model_config_to_json(self.model.config()).dump(); })
      .def("parameter_shapes", [](PyModel& self) {
        py::dict out;
        for (const auto& p : self.model.parameters(true)) out[py::str(p.name)] = py::tuple(py::cast(p.shape));
        return out;
      });

  m.def("plcc", [](const std::vector<double>& x, const std::vector<double>& y) { return plcc(x, y); });
  m.def("srcc", [](const std::vector<double>& x, const std::vector<double>& y) { return srcc(x, y); });
  m.def("krcc", [](const std::vector<double>& x, const std::vector<double>& y) { return krcc(x, y); });
  m.def("logistic_map", [](const std::vector<double>& preds, const std::vector<double>& mos) {
    const auto f = logistic_map(preds, mos);
    py::dict d;
    d["beta"] = f.beta;
    d["mapped"] = f.mapped;
    d["rms_residual"] = f.rms_residual;
    d["iterations"] = f.iterations;
    d["warning"] = f.warning;
    return d;
  });

  m.def(
      "screen_bt500",
      [](const std::string& csv_text) { return screening_dict(screen_bt500(annotations(csv_text, {}, {}))); },
      py::arg("csv_text"));
  m.def(
      "run_mos",
      [](const std::string& csv_text, const std::vector<std::string>& sentinels,
         const std::vector<std::pair<std::string, std::string>>& dups, double t_low, double t_dup) {
        const auto raw = annotations(csv_text, sentinels, dups);
        const auto r = run_mos_pipeline(raw, TrappingConfig{t_low, t_dup});
        py::dict labels;
        for (const auto& l : r.labels) labels[py::str(l.sample_id)] = l.mos;
        py::dict out;
        out["subjects"] = raw.subjects;
        out["dimensions"] = raw.dimensions;
        out["retained"] = r.retained;
        out["trapping"] = screening_dict(r.trapping);
        out["bt500"] = screening_dict(r.bt500);
        out["mos"] = labels;
        return out;
      },
      py::arg("csv_text"), py::arg("sentinel_ids") = std::vector<std::string>{},
      py::arg("duplicate_pairs") = std::vector<std::pair<std::string, std::string>>{}, py::arg("t_low") = 3.0,
      py::arg("t_dup") = 3.0);

  m.def("baseline_cosine_score", &baseline_cosine_score, py::arg("bundle"));

  m.def(
      "crossval_split",
      [](const std::vector<std::string>& prompts, int k, std::uint64_t seed) {
        std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> out;
        for (auto& f : crossval_split(prompts, k, seed)) out.emplace_back(f.train_prompts, f.test_prompts);
        return out;
      },
      py::arg("prompt_ids"), py::arg("k") = 5, py::arg("seed") = 0);

  m.def(
      "gradcheck",
      [](bool f32) {
        const auto r = gradcheck_tiny(RunConfig{}, f32);
        py::dict d;
        d["passed"] = r.passed;
        d["threshold"] = r.threshold;
        d["worst_by_group"] = r.worst_by_group;
        py::dict tensors;
        for (const auto& e : r.tensors) tensors[py::str(e.tensor)] = e.max_rel_error;
        d["tensors"] = tensors;
        return d;
      },
      py::arg("f32") = false);

  m.def(
      "run_command",
      [](const std::string& name, const std::filesystem::path& config, const std::vector<std::string>& overrides) {
        const RunConfig cfg = load_run_config(config, overrides);
        std::ostringstream log;
        log << cfg.header_line() << '\n';
        int code = 0;
        if (name == "synth") cmd_synth(cfg, log);
        else if (name == "mos") cmd_mos(cfg, log);
        else if (name == "train") cmd_train(cfg, log);
        else if (name == "crossval") cmd_crossval(cfg, log);
        else if (name == "score") cmd_score(cfg, log);
        else if (name == "stats") cmd_stats(cfg, log);
        else if (name == "gradcheck") code = cmd_gradcheck(cfg, log);
        else throw ConfigError("unknown command '" + name + "'");
        return py::make_tuple(code, log.str());
      },
      py::arg("name"), py::arg("config") = std::filesystem::path{},
      py::arg("overrides") = std::vector<std::string>{});
}
