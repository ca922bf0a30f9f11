#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "akid/experiment.hpp"
#include "akid/kernels.hpp"
#include "akid/observer.hpp"
#include "akid/tuner.hpp"

namespace py = pybind11;
using namespace akid;
using namespace akid::kernels;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64Array& a) {
  std::vector<std::size_t> extents(a.shape(), a.shape() + a.ndim());
  Tensor t(Shape(std::move(extents)), DType::f64);
  std::copy(a.data(), a.data() + a.size(), t.data<double>().begin());
  return t;
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  double* dst = out.mutable_data();
  for (std::size_t i = 0; i < t.numel(); ++i) dst[i] = t.at(i);
  return out;
}

std::vector<std::int64_t> to_labels(const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

Json parse(const std::string& text) { return Json::parse(text); }

// One experiment held across calls: setup, practice, validate, checkpoints.
class PyExperiment {
 public:
  explicit PyExperiment(const std::string& config_json)
      : config_(ExperimentConfig::from_json(parse(config_json))), kid_(build_kid(config_)) {}

  void setup() { kid_->setup(); }
  std::string practice(std::optional<std::uint64_t> until) { return metrics_json(kid_->practice(until)).dump(); }
  std::pair<double, double> validate() const {
    const ValResult v = kid_->validate();
    return {v.loss, v.accuracy};
  }
  std::uint64_t clock() const { return kid_->clock(); }
  void save_checkpoint(const std::string& path) const { kid_->save_checkpoint(path); }
  void load_checkpoint(const std::string& path) { kid_->load_checkpoint(path); }
  std::string config() const { return config_.to_json().dump(); }
  std::string dot() const { return export_dot(kid_->brain()); }
  std::vector<double> scalars(const std::string& tag) const {
    std::vector<double> out;
    for (const auto& r : kid_->summaries().scalars(tag)) out.push_back(r.value);
    return out;
  }

 private:
  ExperimentConfig config_;
  std::unique_ptr<Kid> kid_;
};

}  // namespace

PYBIND11_MODULE(_akid, m) {
  m.doc() = "akid C++ core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<LookupError>(m, "LookupError", PyExc_KeyError);

  m.def(
      "conv2d",
      [](const F64Array& x, const F64Array& kernel, const F64Array& bias, std::size_t stride_h, std::size_t stride_w,
         const std::string& padding) {
        return to_array(conv2d(to_tensor(x), to_tensor(kernel), to_tensor(bias), stride_h, stride_w, parse_padding(padding)));
      },
      py::arg("x"), py::arg("kernel"), py::arg("bias"), py::arg("stride_h") = 1, py::arg("stride_w") = 1,
      py::arg("padding") = "SAME");
  m.def(
      "conv2d_backward",
      [](const F64Array& x, const F64Array& kernel, const F64Array& dy, std::size_t stride_h, std::size_t stride_w,
         const std::string& padding) {
        const Conv2dGrads g =
            conv2d_backward(to_tensor(x), to_tensor(kernel), to_tensor(dy), stride_h, stride_w, parse_padding(padding));
        return py::make_tuple(to_array(g.dx), to_array(g.dkernel), to_array(g.dbias));
      },
      py::arg("x"), py::arg("kernel"), py::arg("dy"), py::arg("stride_h") = 1, py::arg("stride_w") = 1,
      py::arg("padding") = "SAME");
  m.def(
      "maxpool2d",
      [](const F64Array& x, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw, const std::string& padding) {
        return to_array(maxpool2d(to_tensor(x), Window2d{kh, kw, sh, sw, parse_padding(padding)}).out);
      },
      py::arg("x"), py::arg("kh"), py::arg("kw"), py::arg("sh"), py::arg("sw"), py::arg("padding") = "SAME");
  m.def("relu", [](const F64Array& x) { return to_array(relu(to_tensor(x))); });
  m.def(
      "softmax_cross_entropy",
      [](const F64Array& logits, const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& labels) {
        const SoftmaxXentResult r = softmax_cross_entropy(to_tensor(logits), to_labels(labels));
        return py::make_tuple(r.loss, to_array(r.probabilities), r.accuracy);
      },
      py::arg("logits"), py::arg("labels"));

  m.def(
      "percentiles", [](const F64Array& x) { return percentiles(to_tensor(x)); },
      "min, p7, p16, p31, p50, p69, p84, p93, max");
  m.attr("PERCENTILE_LEVELS") = std::vector<int>(kPercentileLevels.begin(), kPercentileLevels.end());

  m.def("load_idx", [](const std::string& path) -> py::object {
    const IdxData d = load_idx(path);
    if (d.magic == kIdxLabelsMagic) return py::array_t<std::int64_t>(d.labels.size(), d.labels.data());
    std::vector<py::ssize_t> shape(d.dims.begin(), d.dims.end());
    py::array_t<std::uint8_t> out(shape);
    for (std::size_t i = 0; i < d.images.numel(); ++i) out.mutable_data()[i] = static_cast<std::uint8_t>(d.images.at(i));
    return out;
  });
  m.def("write_idx", [](const std::string& path, const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& a) {
    IdxData d;
    d.dims.assign(a.shape(), a.shape() + a.ndim());
    if (a.ndim() == 1) {
      d.magic = kIdxLabelsMagic;
      d.labels.assign(a.data(), a.data() + a.size());
    } else if (a.ndim() == 3) {
      d.magic = kIdxImagesMagic;
      std::vector<std::size_t> extents(a.shape(), a.shape() + 3);
      d.images = Tensor(Shape(std::move(extents)), DType::f64);
      for (py::ssize_t i = 0; i < a.size(); ++i) d.images.set(static_cast<std::size_t>(i), static_cast<double>(a.data()[i]));
    } else {
      throw ShapeError("write_idx: expected a 1-d label or 3-d image array");
    }
    write_idx(path, d);
  });

  m.def("render", [](const std::string& tmpl, const std::string& net, const std::string& opt) {
    return render(tmpl, parse(net), parse(opt));
  });
  m.def("expand", [](const std::string& spec_json, const std::string& base_dir) {
    std::vector<py::dict> out;
    for (const auto& j : expand(TuneSpec::from_json(parse(spec_json), base_dir))) {
      py::dict d;
      d["id"] = j.id;
      d["net_index"] = j.net_index;
      d["opt_index"] = j.opt_index;
      d["config_text"] = j.config_text;
      d["render_error"] = j.render_error;
      out.push_back(d);
    }
    return out;
  });
  m.def("normalize_config", [](const std::string& config_json) {
    return ExperimentConfig::from_json(parse(config_json)).to_json().dump();
  });
  m.def("export_dot", [](const std::string& brain_json) { return export_dot(*Brain::from_config(parse(brain_json))); });

  py::class_<PyExperiment>(m, "Experiment")
      .def(py::init<const std::string&>(), py::arg("config_json"))
      .def("setup", &PyExperiment::setup, py::call_guard<py::gil_scoped_release>())
      .def("practice", &PyExperiment::practice, py::arg("until") = py::none(), py::call_guard<py::gil_scoped_release>())
      .def("validate", &PyExperiment::validate)
      .def_property_readonly("clock", &PyExperiment::clock)
      .def("save_checkpoint", &PyExperiment::save_checkpoint)
      .def("load_checkpoint", &PyExperiment::load_checkpoint)
      .def("config", &PyExperiment::config)
      .def("dot", &PyExperiment::dot)
      .def("scalars", &PyExperiment::scalars);
}
