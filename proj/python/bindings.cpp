#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "pcenet/checkpoint.hpp"
#include "pcenet/degradation.hpp"
#include "pcenet/errors.hpp"
#include "pcenet/evaluation.hpp"
#include "pcenet/image_io.hpp"
#include "pcenet/network.hpp"
#include "pcenet/objectives.hpp"
#include "pcenet/pyramid.hpp"
#include "pcenet/synthetic.hpp"
#include "pcenet/training.hpp"

namespace py = pybind11;
using namespace pcenet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// Images cross the boundary as H x W x C arrays (H x W is taken as one channel).
Raster raster_from_hwc(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DimensionError("expected an H x W or H x W x C array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Raster r(c, h, w);
  const double* src = a.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) r.at(ch, y, x) = src[(static_cast<std::size_t>(y) * w + x) * c + ch];
  return r;
}

Array raster_to_hwc(const Raster& r) {
  Array a({r.height(), r.width(), r.channels()});
  double* dst = a.mutable_data();
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x)
      for (int c = 0; c < r.channels(); ++c)
        dst[(static_cast<std::size_t>(y) * r.width() + x) * r.channels() + c] = r.at(c, y, x);
  return a;
}

// Feature maps stay channel-first (C x H x W).
Array raster_to_chw(const Raster& r) {
  Array a({r.channels(), r.height(), r.width()});
  std::copy(r.values().begin(), r.values().end(), a.mutable_data());
  return a;
}

Raster raster_from_chw(const Array& a) {
  if (a.ndim() != 3) throw DimensionError("expected a C x H x W array");
  Raster r(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), r.values().begin());
  return r;
}

Mask mask_from_array(const MaskArray& a) {
  if (a.ndim() != 2) throw DimensionError("expected an H x W mask");
  Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::object mask_to_array(const std::optional<Mask>& m) {
  if (!m) return py::none();
  py::array_t<bool> a({m->height, m->width});
  bool* dst = a.mutable_data();
  for (std::size_t i = 0; i < m->data.size(); ++i) dst[i] = m->data[i] != 0;
  return std::move(a);
}

std::vector<Array> stack_to_list(const pyramid::LaplacianStack& s) {
  std::vector<Array> out;
  for (const auto& level : s.levels) out.push_back(raster_to_hwc(level));
  return out;
}

pyramid::LaplacianStack list_to_stack(const std::vector<Array>& levels) {
  if (levels.empty()) throw DimensionError("empty pyramid");
  pyramid::LaplacianStack s;
  for (const auto& a : levels) s.levels.push_back(raster_from_hwc(a));
  s.depth = static_cast<int>(levels.size()) - 1;
  s.base_side = s.levels.front().width();
  return s;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

class Model {
 public:
  explicit Model(network::ModelConfig cfg) : net_(cfg) {}

  static Model from_checkpoint(const std::filesystem::path& path) {
    auto ckpt = checkpoint::read_checkpoint(path);
    Model m(ckpt.model);
    m.net_.parameters() = std::move(ckpt.params);
    m.side_ = ckpt.train_config.value("side", image_io::kDefaultSide);
    return m;
  }

  py::tuple forward(const Array& image) const {
    const Raster r = raster_from_hwc(image);
    const auto result = net_.forward(pyramid::laplacian_decompose(r, net_.config().depth - 1));
    std::vector<Array> taps;
    for (const auto& t : result.taps) taps.push_back(raster_to_chw(t));
    return py::make_tuple(raster_to_hwc(result.enhanced), taps);
  }

  Array enhance(const Array& image) const { return forward(image)[0].cast<Array>(); }

  network::PyramidUNet net_;
  int side_ = image_io::kDefaultSide;
};

}  // namespace

PYBIND11_MODULE(_pcenet, m) {
  m.doc() = "Pyramid-constraint fundus image enhancement";
  m.attr("__version__") = PCENET_VERSION;

  auto base = py::register_exception<Error>(m, "PcenetError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  // image io
  m.def(
      "load_image",
      [](const std::filesystem::path& path, int side) {
        const Image img = image_io::load_image(path, side);
        return py::make_tuple(raster_to_hwc(img.pixels), mask_to_array(img.fov_mask));
      },
      py::arg("path"), py::arg("side") = image_io::kDefaultSide,
      "Returns (pixels H x W x 3 in [0,1], fov mask or None).");
  m.def(
      "save_image", [](const Array& pixels, const std::filesystem::path& path) {
        image_io::save_raster(raster_from_hwc(pixels), path);
      },
      py::arg("pixels"), py::arg("path"));
  m.def(
      "make_fov_mask",
      [](int side, double radius_fraction) {
        return mask_to_array(image_io::make_fov_mask(side, radius_fraction));
      },
      py::arg("side"), py::arg("radius_fraction") = image_io::kDefaultFovRadius);
  m.def(
      "synthetic_fundus",
      [](int side, std::uint64_t seed) {
        const Image img = synthetic::synthetic_fundus(side, seed);
        return py::make_tuple(raster_to_hwc(img.pixels), mask_to_array(img.fov_mask));
      },
      py::arg("side"), py::arg("seed") = 0);

  // pyramid
  m.def(
      "gaussian_blur", [](const Array& a) { return raster_to_hwc(pyramid::gaussian_blur(raster_from_hwc(a))); },
      py::arg("image"));
  m.def(
      "downsample", [](const Array& a) { return raster_to_hwc(pyramid::downsample(raster_from_hwc(a))); },
      py::arg("image"));
  m.def(
      "upsample",
      [](const Array& a, int side) { return raster_to_hwc(pyramid::upsample(raster_from_hwc(a), side)); },
      py::arg("image"), py::arg("target_side"));
  m.def(
      "laplacian_decompose",
      [](const Array& a, int levels) { return stack_to_list(pyramid::laplacian_decompose(raster_from_hwc(a), levels)); },
      py::arg("image"), py::arg("levels") = 4, "Band levels p^0..p^{L-1} followed by the low-pass residual.");
  m.def(
      "laplacian_reconstruct",
      [](const std::vector<Array>& levels) { return raster_to_hwc(pyramid::laplacian_reconstruct(list_to_stack(levels))); },
      py::arg("levels"));

  // degradation
  m.def(
      "degrade",
      [](const Array& image, int seq_len, std::uint64_t seed, const std::string& image_id, py::object fov) {
        degradation::DegradationConfig cfg;
        cfg.seed = seed;
        Image clean(raster_from_hwc(image));
        if (!fov.is_none()) clean.fov_mask = mask_from_array(fov.cast<MaskArray>());
        const auto seq = degradation::make_seqlc(clean, cfg, seq_len, image_id);
        std::vector<Array> variants;
        py::list recipes;
        for (int k = 0; k < seq.K(); ++k) {
          variants.push_back(raster_to_hwc(seq.variants[k].pixels));
          recipes.append(json_to_py(degradation::recipe_to_json(seq.recipes[k])));
        }
        return py::make_tuple(variants, recipes);
      },
      py::arg("image"), py::arg("seq_len") = 2, py::arg("seed") = 0, py::arg("image_id") = "",
      py::arg("fov_mask") = py::none(), "Returns (variants, recipes) for one clean image.");
  m.def(
      "apply_blur",
      [](const Array& a, double sigma) { return raster_to_hwc(degradation::apply_blur(raster_from_hwc(a), sigma)); },
      py::arg("image"), py::arg("sigma"));

  // network
  py::class_<Model>(m, "Model")
      .def(py::init([](int depth, int base_channels, int channel_cap, std::uint64_t seed) {
             network::ModelConfig cfg;
             cfg.depth = depth;
             cfg.base_channels = base_channels;
             cfg.channel_cap = channel_cap;
             Model model(cfg);
             model.net_.initialize(seed);
             return model;
           }),
           py::arg("depth") = 5, py::arg("base_channels") = 64, py::arg("channel_cap") = 512, py::arg("seed") = 0)
      .def_static("from_checkpoint", &Model::from_checkpoint, py::arg("path"))
      .def("forward", &Model::forward, py::arg("image"),
           "Returns (enhanced H x W x 3, list of C x H x W feature taps).")
      .def("enhance", &Model::enhance, py::arg("image"))
      .def_property_readonly("parameter_count", [](const Model& self) { return self.net_.parameters().total_count(); })
      .def_property_readonly("depth", [](const Model& self) { return self.net_.config().depth; })
      .def_property_readonly("side", [](const Model& self) { return self.side_; });
  m.def(
      "parameter_count",
      [](int depth, int base_channels, int channel_cap) {
        network::ModelConfig cfg;
        cfg.depth = depth;
        cfg.base_channels = base_channels;
        cfg.channel_cap = channel_cap;
        return network::parameter_count(cfg);
      },
      py::arg("depth") = 5, py::arg("base_channels") = 64, py::arg("channel_cap") = 512);
  m.def(
      "spp", [](const Array& feature) { return network::spp(raster_from_chw(feature)); }, py::arg("feature"),
      "Spatial pyramid pooling of a C x H x W map; length 84 * C.");

  // objectives
  m.def(
      "enhancement_loss",
      [](const Array& target, const std::vector<Array>& outputs) {
        std::vector<Raster> outs;
        for (const auto& o : outputs) outs.push_back(raster_from_hwc(o));
        return objectives::enhancement_loss(raster_from_hwc(target), outs);
      },
      py::arg("target"), py::arg("outputs"));
  m.def(
      "layer_consistency_loss",
      [](const std::vector<std::vector<double>>& descriptors) { return objectives::layer_consistency_loss(descriptors); },
      py::arg("descriptors"));
  m.def("total_loss", [](double le, double lc, double lambda_C) { return objectives::total_loss(le, lc, lambda_C).L_total; },
        py::arg("L_E"), py::arg("L_C"), py::arg("lambda_C") = objectives::kDefaultLambdaC);

  // training
  m.def(
      "lr_schedule",
      [](int epoch, int epochs, int decay_start_epoch, double base_lr) {
        training::TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.decay_start_epoch = decay_start_epoch;
        cfg.base_lr = base_lr;
        return training::lr_schedule(epoch, cfg);
      },
      py::arg("epoch"), py::arg("epochs") = 200, py::arg("decay_start_epoch") = 150, py::arg("base_lr") = 1e-3);

  // evaluation
  m.def(
      "psnr", [](const Array& a, const Array& b) { return evaluation::psnr(raster_from_hwc(a), raster_from_hwc(b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "ssim", [](const Array& a, const Array& b) { return evaluation::ssim(raster_from_hwc(a), raster_from_hwc(b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "overlap_metrics",
      [](const MaskArray& pred, const MaskArray& ref) {
        const auto o = evaluation::overlap_metrics(mask_from_array(pred), mask_from_array(ref));
        return py::make_tuple(o.iou, o.dsc);
      },
      py::arg("pred"), py::arg("ref"), "Returns (IoU, DSC).");
  m.def(
      "wfqa",
      [](const std::vector<std::pair<std::string, std::string>>& records) {
        std::ostringstream csv;
        for (const auto& [id, label] : records) csv << id << ',' << label << '\n';
        std::istringstream in(csv.str());
        const auto s = evaluation::wfqa(evaluation::parse_quality_labels(in));
        return py::make_tuple(s.fiqa, s.wfqa);
      },
      py::arg("records"), "records: (id, label) pairs with label in Good/Usable/Reject. Returns (FIQA, WFQA).");
}
