#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tadoc/backward_map.hpp"
#include "tadoc/dataset.hpp"
#include "tadoc/image.hpp"
#include "tadoc/image_io.hpp"
#include "tadoc/metrics.hpp"
#include "tadoc/model.hpp"
#include "tadoc/synth.hpp"
#include "tadoc/train.hpp"

namespace py = pybind11;
using namespace tadoc;

namespace {

// maps cross the boundary as float64 arrays of shape (H, W, 2)
BackwardMap map_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 3 || arr.shape(2) != 2)
        throw std::invalid_argument("map array must have shape (H, W, 2)");
    BackwardMap m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    auto r = arr.unchecked<3>();
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) m.at(y, x) = {r(y, x, 0), r(y, x, 1)};
    return m;
}

py::array_t<double> map_to_array(const BackwardMap& m) {
    py::array_t<double> arr({m.height(), m.width(), 2});
    auto w = arr.mutable_unchecked<3>();
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            w(y, x, 0) = m.at(y, x).u;
            w(y, x, 1) = m.at(y, x).v;
        }
    return arr;
}

// images cross as float32 arrays (H, W) or (H, W, C) in [0, 1]
RasterImage image_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
    int channels = 1;
    if (arr.ndim() == 3)
        channels = static_cast<int>(arr.shape(2));
    else if (arr.ndim() != 2)
        throw std::invalid_argument("image array must have shape (H, W) or (H, W, C)");
    RasterImage img(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)), channels);
    std::memcpy(img.data(), arr.data(), sizeof(float) * img.size());
    img.clamp01();
    return img;
}

py::array image_to_array(const RasterImage& img) {
    if (img.channels() == 1) {
        py::array_t<float> arr({img.height(), img.width()});
        std::memcpy(arr.mutable_data(), img.data(), sizeof(float) * img.size());
        return arr;
    }
    py::array_t<float> arr({img.height(), img.width(), img.channels()});
    std::memcpy(arr.mutable_data(), img.data(), sizeof(float) * img.size());
    return arr;
}

std::vector<LayoutRegion> regions_from_list(const py::list& list) {
    std::vector<LayoutRegion> out;
    for (auto item : list) {
        py::dict d = item.cast<py::dict>();
        LayoutRegion r;
        r.category = d["category"].cast<std::string>();
        auto bb = d["bbox"].cast<std::vector<double>>();
        if (bb.size() != 4) throw std::invalid_argument("bbox must have 4 values");
        r.x0 = bb[0];
        r.y0 = bb[1];
        r.x1 = bb[2];
        r.y1 = bb[3];
        r.confidence = d.contains("confidence") ? d["confidence"].cast<double>() : 1.0;
        r.validate();
        out.push_back(std::move(r));
    }
    return out;
}

py::list regions_to_list(const std::vector<LayoutRegion>& regions) {
    py::list out;
    for (const auto& r : regions) {
        py::dict d;
        d["category"] = r.category;
        d["bbox"] = py::make_tuple(r.x0, r.y0, r.x1, r.y1);
        d["confidence"] = r.confidence;
        out.append(d);
    }
    return out;
}

ModelConfig config_from_dict(const py::dict& d) {
    ModelConfig cfg;
    for (auto item : d) {
        std::string key = item.first.cast<std::string>();
        if (key == "t_total") cfg.t_total = item.second.cast<int>();
        else if (key == "base_channels") cfg.base_channels = item.second.cast<int>();
        else if (key == "n_res_blocks") cfg.n_res_blocks = item.second.cast<int>();
        else if (key == "time_dim") cfg.time_dim = item.second.cast<int>();
        else if (key == "alpha") cfg.alpha = item.second.cast<double>();
        else if (key == "beta") cfg.beta = item.second.cast<double>();
        else if (key == "lr") cfg.lr = item.second.cast<double>();
        else if (key == "weight_decay") cfg.weight_decay = item.second.cast<double>();
        else if (key == "batch_size") cfg.batch_size = item.second.cast<int>();
        else if (key == "epochs") cfg.epochs = item.second.cast<int>();
        else if (key == "seed") cfg.seed = item.second.cast<std::uint64_t>();
        else if (key == "val_count") cfg.val_count = item.second.cast<int>();
        else throw std::invalid_argument("unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_tadoc, m) {
    m.doc() = "time-aware document dewarping core";

    // flow algebra
    m.def("identity_grid",
          [](int h, int w) { return map_to_array(identity_grid(h, w)); }, py::arg("height"),
          py::arg("width"));
    m.def("interpolate_map",
          [](const py::array_t<double>& f_T, int t, int T) {
              return map_to_array(interpolate_map(map_from_array(f_T), {t, T}));
          },
          py::arg("f_T"), py::arg("t"), py::arg("t_total"));
    m.def("recover_final",
          [](const py::array_t<double>& f_t, int t, int T) {
              return map_to_array(recover_final(map_from_array(f_t), {t, T}));
          },
          py::arg("f_t"), py::arg("t"), py::arg("t_total"));
    m.def("average_final", [](const py::list& maps) {
        std::vector<BackwardMap> ms;
        for (auto item : maps) ms.push_back(map_from_array(item.cast<py::array_t<double>>()));
        return map_to_array(average_final(ms));
    });
    m.def("compose_maps", [](const py::array_t<double>& outer, const py::array_t<double>& inner) {
        return map_to_array(compose_maps(map_from_array(outer), map_from_array(inner)));
    });
    m.def("invert_map",
          [](const py::array_t<double>& mp, double tol, int max_iters) {
              auto res = invert_map(map_from_array(mp), tol, max_iters);
              py::array_t<bool> conv({res.map.height(), res.map.width()});
              auto w = conv.mutable_unchecked<2>();
              for (int y = 0; y < res.map.height(); ++y)
                  for (int x = 0; x < res.map.width(); ++x)
                      w(y, x) = res.converged[static_cast<std::size_t>(y) * res.map.width() + x] != 0;
              return py::make_tuple(map_to_array(res.map), conv, res.failure_ratio);
          },
          py::arg("map"), py::arg("tol") = 1e-4, py::arg("max_iters") = 50);
    m.def("jacobian_min_det",
          [](const py::array_t<double>& mp) { return jacobian_min_det(map_from_array(mp)); });

    // raster
    m.def("sample_bilinear", [](const py::array_t<float>& img, const py::array_t<double>& mp) {
        return image_to_array(sample_bilinear(image_from_array(img), map_from_array(mp)));
    });
    m.def("upsample_map_bilinear",
          [](const py::array_t<double>& mp, int h, int w) {
              return map_to_array(upsample_map_bilinear(map_from_array(mp), h, w));
          },
          py::arg("map"), py::arg("out_h"), py::arg("out_w"));
    m.def("resize_bilinear", [](const py::array_t<float>& img, int h, int w) {
        return image_to_array(resize_bilinear(image_from_array(img), h, w));
    });
    m.def("gaussian_downsample2x", [](const py::array_t<float>& img) {
        return image_to_array(gaussian_downsample2x(image_from_array(img)));
    });
    m.def("load_image", [](const std::string& path) { return image_to_array(load_image(path)); });
    m.def("save_image", [](const py::array_t<float>& img, const std::string& path) {
        save_image(image_from_array(img), path);
    });
    m.def("load_bmap", [](const std::string& path) { return map_to_array(load_bmap(path)); });
    m.def("save_bmap", [](const py::array_t<double>& mp, const std::string& path) {
        save_bmap(map_from_array(mp), path);
    });

    // metrics
    m.def("ms_ssim", [](const py::array_t<float>& a, const py::array_t<float>& b) {
        return ms_ssim(image_from_array(a), image_from_array(b));
    });
    m.def("ld_oracle",
          [](const py::array_t<double>& pred, const py::array_t<double>& gt, int h, int w) {
              return ld_oracle(map_from_array(pred), map_from_array(gt), h, w);
          },
          py::arg("pred_map"), py::arg("gt_map"), py::arg("out_h") = 128, py::arg("out_w") = 128);
    m.def("ld_registration", [](const py::array_t<float>& a, const py::array_t<float>& b) {
        return ld_registration(image_from_array(a), image_from_array(b));
    });
    m.def("ad_oracle",
          [](const py::array_t<double>& pred, const py::array_t<double>& gt,
             const py::array_t<float>& flat, int h, int w) -> py::object {
              auto v = ad_oracle(map_from_array(pred), map_from_array(gt),
                                 image_from_array(flat), h, w);
              return v ? py::cast(*v) : py::none();
          },
          py::arg("pred_map"), py::arg("gt_map"), py::arg("flat"), py::arg("out_h") = 128,
          py::arg("out_w") = 128);
    m.def("edit_distance", [](const std::string& a, const std::string& b) {
        return edit_distance(a, b);
    });
    m.def("cer", [](const std::string& ref, const std::string& hyp) { return cer(ref, hyp); });
    m.def("dls",
          [](const py::list& ref, const py::list& test, double thr) -> py::object {
              auto v = dls(regions_from_list(ref), regions_from_list(test), thr);
              return v ? py::cast(*v) : py::none();
          },
          py::arg("regions_ref"), py::arg("regions_test"), py::arg("conf_threshold") = 0.5);
    m.def("toy_layout_detect", [](const py::array_t<float>& img) {
        return regions_to_list(toy_layout_detect(image_from_array(img)));
    });
    m.def("estimate_mask", [](const py::array_t<float>& img) {
        return image_to_array(estimate_mask(image_from_array(img)));
    });

    // synthesis
    m.def("gen_flat_page",
          [](std::uint64_t seed, int size) {
              PageSpec spec;
              if (size > 0) spec.height = spec.width = size;
              auto page = gen_flat_page(seed, spec);
              py::dict d;
              d["image"] = image_to_array(page.image);
              d["layout"] = regions_to_list(page.layout);
              d["text"] = page.text;
              return d;
          },
          py::arg("seed"), py::arg("size") = 0);
    m.def("build_dataset",
          [](int n, const std::string& out_dir, std::uint64_t seed, int size) {
              PageSpec spec;
              if (size > 0) spec.height = spec.width = size;
              return build_dataset(n, out_dir, seed, spec, WarpRanges{});
          },
          py::arg("n"), py::arg("out_dir"), py::arg("seed"), py::arg("size") = 0);

    // model
    py::class_<TadocModel>(m, "Model")
        .def(py::init([](const py::dict& cfg) { return TadocModel(config_from_dict(cfg)); }))
        .def_property_readonly("frozen", &TadocModel::frozen)
        .def("set_frozen", &TadocModel::set_frozen)
        .def_property_readonly("parameter_count", &TadocModel::parameter_count)
        .def_property_readonly("config_json",
                               [](const TadocModel& m_) { return m_.config().to_json(); })
        .def("dewarp",
             [](const TadocModel& model, const py::array_t<float>& img, const std::string& mode,
                bool parallel) {
                 RasterImage image = image_from_array(img);
                 InferResult r = mode == "direct"
                                     ? infer_direct(model, image)
                                     : infer_average(model, image, nullptr, parallel);
                 return py::make_tuple(image_to_array(r.image), map_to_array(r.map));
             },
             py::arg("image"), py::arg("mode") = "average", py::arg("parallel") = true);
    m.def("load_model", &load_checkpoint, py::arg("path"));
    m.def("save_model", &save_checkpoint, py::arg("model"), py::arg("path"));
    m.def("train",
          [](const py::dict& cfg, const std::string& manifest, const std::string& out_dir) {
              TadocModel model(config_from_dict(cfg));
              auto result = train(model, manifest, out_dir);
              py::dict d;
              d["checkpoint"] = result.checkpoint_path;
              d["log"] = result.log_path;
              d["best_epoch"] = result.best_epoch;
              return d;
          },
          py::arg("config"), py::arg("manifest"), py::arg("out_dir"));
}
