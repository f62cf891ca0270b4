// Python bindings: numpy in, numpy out.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "atn/augment.hpp"
#include "atn/biomarkers.hpp"
#include "atn/codec.hpp"
#include "atn/errors.hpp"
#include "atn/fwhm.hpp"
#include "atn/nets.hpp"
#include "atn/survival.hpp"
#include "atn/synthgen.hpp"

namespace py = pybind11;
using namespace atn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const FloatArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(img.pixels.data(), a.data(), img.size() * sizeof(float));
  return img;
}

py::array_t<float> to_array(const Image& img) {
  py::array_t<float> out({img.height, img.width});
  std::memcpy(out.mutable_data(), img.pixels.data(), img.size() * sizeof(float));
  return out;
}

std::vector<Image> to_images(const FloatArray& a) {
  if (a.ndim() != 3) throw ShapeError("expected a [N, H, W] array");
  std::vector<Image> out;
  const auto h = static_cast<int>(a.shape(1)), w = static_cast<int>(a.shape(2));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    Image img(h, w);
    std::memcpy(img.pixels.data(), a.data(i, 0, 0), img.size() * sizeof(float));
    out.push_back(std::move(img));
  }
  return out;
}

py::array_t<float> stack(const std::vector<Image>& images) {
  const int h = images.empty() ? 0 : images[0].height, w = images.empty() ? 0 : images[0].width;
  py::array_t<float> out({static_cast<int>(images.size()), h, w});
  for (std::size_t i = 0; i < images.size(); ++i)
    std::memcpy(out.mutable_data(i, 0, 0), images[i].pixels.data(), images[i].size() * sizeof(float));
  return out;
}

std::vector<double> to_vector(const DoubleArray& a) {
  return {a.data(), a.data() + a.size()};
}

patches3d::SegmentSeries series(const DoubleArray& arclength, const DoubleArray& diameter) {
  patches3d::SegmentSeries s;
  s.arclength_mm = to_vector(arclength);
  s.diameter_mm = to_vector(diameter);
  if (s.arclength_mm.size() != s.diameter_mm.size())
    throw DataError("arclength and diameter lengths differ");
  for (double d : s.diameter_mm) s.area_mm2.push_back(0.25 * 3.14159265358979323846 * d * d);
  return s;
}

}  // namespace

PYBIND11_MODULE(_atn, m) {
  m.doc() = "Airway patch synthesis, refinement, measurement and survival analysis";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  py::class_<AirwayLabel>(m, "AirwayLabel")
      .def(py::init<>())
      .def_readwrite("r_a", &AirwayLabel::r_a)
      .def_readwrite("r_b", &AirwayLabel::r_b)
      .def_readwrite("w_a", &AirwayLabel::w_a)
      .def_readwrite("w_b", &AirwayLabel::w_b)
      .def_readwrite("c_x", &AirwayLabel::c_x)
      .def_readwrite("c_y", &AirwayLabel::c_y)
      .def_readwrite("theta", &AirwayLabel::theta)
      .def_readwrite("has_adjacent", &AirwayLabel::has_adjacent)
      .def_property_readonly("lumen_radius", &AirwayLabel::lumen_radius)
      .def_property_readonly("outer_radius", &AirwayLabel::outer_radius)
      .def("__repr__", [](const AirwayLabel& l) {
        return "AirwayLabel(r_a=" + std::to_string(l.r_a) + ", r_b=" + std::to_string(l.r_b) +
               ", w_a=" + std::to_string(l.w_a) + ", w_b=" + std::to_string(l.w_b) +
               ", theta=" + std::to_string(l.theta) + ")";
      });

  m.def("sample_label", [](std::uint64_t seed) { return synth::sample_label({}, seed); },
        py::arg("seed"));
  m.def(
      "render_patch",
      [](const AirwayLabel& label, std::uint64_t seed, bool pseudo_real) {
        const synth::SynthConfig cfg;
        const auto p = pseudo_real ? synth::render_pseudoreal(label, cfg, {}, seed)
                                   : synth::render_patch(label, cfg, seed);
        return to_array(p.image);
      },
      py::arg("label"), py::arg("seed"), py::arg("pseudo_real") = false,
      "80x80 HU patch at 0.5 mm spacing.");

  m.def("standardize", [](const FloatArray& a) { return to_array(augment::standardize(to_image(a))); });
  m.def(
      "augment",
      [](const FloatArray& a, const AirwayLabel& label, std::uint64_t seed, bool is_real) {
        const auto out = augment::augment({to_image(a), 0.5, label}, {}, is_real, seed);
        return py::make_tuple(to_array(out.image), *out.label);
      },
      py::arg("patch"), py::arg("label"), py::arg("seed"), py::arg("is_real") = false);

  m.def(
      "measure_fwhm",
      [](const FloatArray& a, double spacing_mm) {
        return fwhm::measure_fwhm(to_image(a), spacing_mm, {}).label;
      },
      py::arg("patch"), py::arg("spacing_mm") = 0.5);
  m.def("fit_ellipse", [](const DoubleArray& xy) {
    if (xy.ndim() != 2 || xy.shape(1) != 2) throw ShapeError("expected an [N, 2] array");
    std::vector<fwhm::Point2> pts;
    for (py::ssize_t i = 0; i < xy.shape(0); ++i) pts.push_back({*xy.data(i, 0), *xy.data(i, 1)});
    const auto e = fwhm::fit_ellipse(pts);
    py::dict d;
    d["center"] = py::make_tuple(e.center.x, e.center.y);
    d["major"] = e.major;
    d["minor"] = e.minor;
    d["theta"] = e.theta;
    return d;
  });

  m.def("encode_label", [](const AirwayLabel& l) {
    const auto e = codec::encode_label(l);
    return std::vector<double>(e.begin(), e.end());
  });
  m.def("decode_label", [](const std::vector<double>& v) { return codec::decode_label(v).label; });

  m.def(
      "intertapering",
      [](const DoubleArray& diameter, const DoubleArray& parent_diameter) {
        auto child = series(diameter, diameter);
        auto parent = series(parent_diameter, parent_diameter);
        return biomarkers::intertapering(child, parent);
      },
      py::arg("diameter"), py::arg("parent_diameter"));
  m.def(
      "intratapering",
      [](const DoubleArray& arclength, const DoubleArray& diameter) {
        return biomarkers::intratapering(series(arclength, diameter));
      },
      py::arg("arclength_mm"), py::arg("diameter_mm"));
  m.def(
      "segment_volume",
      [](const DoubleArray& area, double interval_mm) {
        patches3d::SegmentSeries s;
        s.area_mm2 = to_vector(area);
        return biomarkers::segment_volume(s, interval_mm);
      },
      py::arg("area_mm2"), py::arg("interval_mm") = 0.5);

  m.def(
      "concordance_index",
      [](const DoubleArray& risk, const DoubleArray& time, const std::vector<bool>& event) {
        return survival::concordance_index(to_vector(risk), to_vector(time), event);
      },
      py::arg("risk"), py::arg("time"), py::arg("event"));
  m.def(
      "cox_fit",
      [](const DoubleArray& x, const DoubleArray& time, const std::vector<bool>& event,
         std::vector<std::string> names) {
        if (x.ndim() != 2) throw ShapeError("covariates must be an [N, P] array");
        survival::CoxData data;
        data.time = to_vector(time);
        data.event = event;
        data.x.resize(x.shape(0), x.shape(1));
        for (py::ssize_t i = 0; i < x.shape(0); ++i)
          for (py::ssize_t j = 0; j < x.shape(1); ++j) data.x(i, j) = *x.data(i, j);
        if (names.empty())
          for (py::ssize_t j = 0; j < x.shape(1); ++j) names.push_back("x" + std::to_string(j));
        data.names = names;
        const auto fit = survival::cox_fit(data);
        py::dict d;
        d["names"] = fit.names;
        d["beta"] = std::vector<double>(fit.beta.begin(), fit.beta.end());
        d["se"] = std::vector<double>(fit.se.begin(), fit.se.end());
        d["p_value"] = std::vector<double>(fit.p_value.begin(), fit.p_value.end());
        d["concordance"] = fit.concordance;
        d["loglik"] = fit.loglik;
        d["converged"] = fit.converged;
        return d;
      },
      py::arg("x"), py::arg("time"), py::arg("event"), py::arg("names") = std::vector<std::string>{});

  m.def(
      "refine",
      [](const std::filesystem::path& checkpoint, const FloatArray& patches) {
        auto loaded = nets::load_refiner(checkpoint);
        const auto images = to_images(patches);
        std::vector<Image> out;
        {
          py::gil_scoped_release release;
          out = nets::refine(loaded.model, images);
        }
        return stack(out);
      },
      py::arg("checkpoint"), py::arg("patches"));
  m.def(
      "measure",
      [](const std::filesystem::path& checkpoint, const FloatArray& patches) {
        auto loaded = nets::load_cnr(checkpoint);
        std::vector<AirwayLabel> labels;
        for (const auto& d : nets::measure(loaded.model, to_images(patches))) labels.push_back(d.label);
        return labels;
      },
      py::arg("checkpoint"), py::arg("patches"),
      "Standardized 32x32 patches in, decoded labels out.");
}
