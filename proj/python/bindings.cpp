#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "entroseg/error.hpp"
#include "entroseg/io.hpp"
#include "entroseg/pipeline.hpp"

namespace py = pybind11;
using namespace entroseg;
using nlohmann::json;

namespace {

// uint8 arrays are divided by 255; floating arrays must already lie in [0,1].
// Shapes: (H, W), (H, W, 1), (H, W, 3) or (H, W, 4) with alpha dropped.
RasterImage to_raster(const py::array& array) {
    if (array.ndim() != 2 && array.ndim() != 3) {
        throw InputError("image must have shape (H, W) or (H, W, C)");
    }
    const int h = static_cast<int>(array.shape(0));
    const int w = static_cast<int>(array.shape(1));
    const int src_c = array.ndim() == 3 ? static_cast<int>(array.shape(2)) : 1;
    if (src_c != 1 && src_c != 3 && src_c != 4) {
        throw InputError("image must have 1, 3 or 4 channels");
    }
    const int c = src_c == 1 ? 1 : 3;
    std::vector<double> data(static_cast<std::size_t>(w) * h * c);
    const bool bytes = py::dtype::of<std::uint8_t>().is(array.dtype());
    const auto values = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(array);
    if (!values) {
        throw InputError("image must be numeric");
    }
    const double* src = values.data();
    for (std::size_t p = 0; p < static_cast<std::size_t>(w) * h; ++p) {
        for (int k = 0; k < c; ++k) {
            const double v = src[p * src_c + k];
            data[p * c + k] = bytes ? v / 255.0 : v;
        }
    }
    try {
        return RasterImage(w, h, c, std::move(data));
    } catch (const InvalidArgument& e) {
        throw InputError(e.what());
    }
}

py::array_t<double> to_array(const RasterImage& img) {
    std::vector<py::ssize_t> shape{img.height(), img.width()};
    if (img.channels() > 1) {
        shape.push_back(img.channels());
    }
    py::array_t<double> out(shape);
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

py::object to_py(const json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

json from_py(const py::object& o) {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

PipelineConfig make_config(const py::object& config) {
    PipelineConfig c;
    if (!config.is_none()) {
        apply_config_json(from_py(config), c);
    }
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        throw InputError(e.what());
    }
    return c;
}

DetBox box_from(const py::handle& h) {
    return detections_from_json(json::array({from_py(py::reinterpret_borrow<py::object>(h))})).front();
}

std::vector<DetBox> boxes_from(const py::object& list) {
    return detections_from_json(from_py(list));
}

std::vector<GroundTruthBox> truths_from(const py::object& list) {
    std::vector<GroundTruthBox> out;
    for (const auto& item : list) {
        const auto t = item.cast<std::vector<double>>();
        if (t.size() != 4) {
            throw InputError("ground truth boxes are [x1, y1, x2, y2]");
        }
        out.push_back({t[0], t[1], t[2], t[3], std::nullopt, false});
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Segmentation-driven text detection in high-entropy images";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<PipelineError>(m, "PipelineError", PyExc_RuntimeError);

    m.def("load_image", [](const std::string& path) { return to_array(load_image(path)); }, py::arg("path"),
          "Decode an image file to a float array in [0,1].");

    m.def(
        "entropy",
        [](const py::array& image, double threshold) {
            const double bits = shannon_entropy(to_grayscale(to_raster(image)));
            return py::make_tuple(bits, std::string(to_string(classify_entropy(bits, threshold))));
        },
        py::arg("image"), py::arg("threshold") = kDefaultEntropyThreshold,
        "Histogram entropy in bits and the SceneLike/ProductLike class.");

    m.def(
        "segment",
        [](const py::array& image, const py::object& config) {
            const auto img = to_raster(image);
            const auto c = make_config(config);
            SegmentationResult r;
            {
                py::gil_scoped_release release;
                r = segment_image(img, c);
            }
            return to_py(segments_json(r));
        },
        py::arg("image"), py::arg("config") = py::none(), "Segment an image; returns the segments document.");

    m.def(
        "detect",
        [](const py::array& image, const py::object& config) {
            const auto img = to_raster(image);
            const auto c = make_config(config);
            const auto members = build_members(c);
            DetectionResult r;
            {
                py::gil_scoped_release release;
                r = detect_text(img, c, members);
            }
            py::dict out;
            out["boxes"] = to_py(detections_json(r.ensemble.boxes));
            out["entropy"] = r.entropy_bits;
            out["entropy_class"] = std::string(to_string(r.entropy_class));
            out["segments"] = r.ensemble.segments_used;
            out["diagnostics"] = to_py(diagnostics_json(r.ensemble.diagnostics));
            return out;
        },
        py::arg("image"), py::arg("config") = py::none(),
        "Segment, run the detector ensemble and fuse; returns boxes and diagnostics.");

    m.def(
        "iou", [](const py::object& a, const py::object& b) { return iou(box_from(a), box_from(b)); }, py::arg("a"),
        py::arg("b"));

    m.def(
        "nms",
        [](const py::object& boxes, double threshold) {
            return to_py(detections_json(nms(boxes_from(boxes), threshold)));
        },
        py::arg("boxes"), py::arg("threshold"));

    m.def(
        "selective_nms",
        [](const py::dict& boxes_by_model, const py::dict& accuracies, double p_th, double p_tl,
           double nms_threshold) {
            BoxesByModel grouped;
            for (const auto& [model, boxes] : boxes_by_model) {
                const auto id = model.cast<std::string>();
                auto list = boxes_from(py::reinterpret_borrow<py::object>(boxes));
                for (auto& b : list) {
                    b.model_id = id;
                }
                grouped[id] = std::move(list);
            }
            std::vector<DetectorDescriptor> descriptors;
            for (const auto& [model, acc] : accuracies) {
                descriptors.push_back({model.cast<std::string>(), acc.cast<double>(), DetectorKind::Builtin});
            }
            const EnsembleConfig config{p_th, p_tl, nms_threshold};
            validate(config);
            return to_py(detections_json(selective_nms(grouped, descriptors, config)));
        },
        py::arg("boxes_by_model"), py::arg("accuracies"), py::arg("p_th") = 0.9, py::arg("p_tl") = 0.8,
        py::arg("nms_threshold") = 0.95);

    m.def(
        "evaluate",
        [](const py::object& detections, const py::object& truths, double match_iou) {
            return to_py(metrics_json(match_detections(boxes_from(detections), truths_from(truths), match_iou)));
        },
        py::arg("detections"), py::arg("truths"), py::arg("match_iou") = kDefaultMatchIou,
        "Precision, recall and F-measure under greedy one-to-one matching.");

    m.def("default_config", [] { return to_py(config_json(PipelineConfig{})); });
}
