#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "entroseg/error.hpp"
#include "entroseg/io.hpp"
#include "entroseg/remote.hpp"

namespace entroseg {

using nlohmann::json;

namespace {

json rect_json(const PixelRect& r) { return json::array({r.x0, r.y0, r.x1, r.y1}); }

template <class T>
T get(const json& j, const char* key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw InputError(std::string("config: wrong type for '") + key + "'");
    }
}

double unit_value(const json& j, const char* key) {
    const double v = get<double>(j, key);
    if (!(v >= 0.0 && v <= 1.0)) {
        throw InputError(std::string("config: '") + key + "' must lie in [0,1]");
    }
    return v;
}

void require_object(const json& j, const char* what) {
    if (!j.is_object()) {
        throw InputError(std::string("config: '") + what + "' must be an object");
    }
}

[[noreturn]] void unknown_key(const std::string& scope, const std::string& key) {
    throw InputError("config: unknown key '" + scope + key + "'");
}

DetectorSpec detector_from_json(const json& j) {
    require_object(j, "detectors[]");
    DetectorSpec d;
    bool kind_given = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") {
            const auto kind = get<std::string>(value, "kind");
            if (kind == "builtin") {
                d.kind = DetectorKind::Builtin;
            } else if (kind == "external") {
                d.kind = DetectorKind::External;
            } else {
                throw InputError("config: detector kind must be 'builtin' or 'external'");
            }
            kind_given = true;
        } else if (key == "model_id") {
            d.model_id = get<std::string>(value, "model_id");
        } else if (key == "accuracy") {
            d.accuracy = unit_value(value, "accuracy");
        } else if (key == "endpoint") {
            d.endpoint = get<std::string>(value, "endpoint");
        } else {
            unknown_key("detectors[].", key);
        }
    }
    if (!kind_given && !d.endpoint.empty()) {
        d.kind = DetectorKind::External;
    }
    if (d.kind == DetectorKind::External) {
        parse_endpoint(d.endpoint);
    }
    return d;
}

std::string fmt(const char* format, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

}  // namespace

// ---- detections, segments, metrics -------------------------------------------

json to_json(const DetBox& b) {
    return {{"x1", b.x1}, {"y1", b.y1}, {"x2", b.x2}, {"y2", b.y2}, {"prob", b.prob}, {"model_id", b.model_id}};
}

json detections_json(std::span<const DetBox> boxes) {
    json out = json::array();
    for (const auto& b : boxes) {
        out.push_back(to_json(b));
    }
    return out;
}

std::vector<DetBox> detections_from_json(const json& j) {
    if (!j.is_array()) {
        throw InputError("detections: expected a JSON array");
    }
    std::vector<DetBox> out;
    try {
        for (const auto& e : j) {
            DetBox b{e.at("x1").get<double>(), e.at("y1").get<double>(), e.at("x2").get<double>(),
                     e.at("y2").get<double>(),  e.at("prob").get<double>(), e.at("model_id").get<std::string>()};
            validate(b);
            out.push_back(std::move(b));
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("detections: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw InputError(std::string("detections: ") + e.what());
    }
    return out;
}

json segments_json(const SegmentationResult& r) {
    json segs = json::array();
    for (std::size_t i = 0; i < r.segments.segments.size(); ++i) {
        const auto& s = r.segments.segments[i];
        segs.push_back({{"id", "seg-" + std::to_string(i)},
                        {"label", s.label},
                        {"cell_count", s.cells.size()},
                        {"bbox", rect_json(s.bbox)},
                        {"cells", s.cells}});
    }
    json out = {
        {"width", r.segments.width},
        {"height", r.segments.height},
        {"cell_size", r.grid.cell_size()},
        {"cols", r.grid.cols()},
        {"rows", r.grid.rows()},
        {"padding", r.segments.padding},
        {"classes", r.em.params.classes()},
        {"labels", r.labels.labels},
        {"segments", std::move(segs)},
    };
    if (r.selection) {
        out["k_selection"] = {{"candidates", r.selection->candidates}, {"bic", r.selection->bic},
                              {"chosen", r.selection->classes}};
    }
    return out;
}

json metrics_json(const Metrics& m) {
    return {{"P", m.precision}, {"R", m.recall}, {"F", m.f_measure}, {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}};
}

json diagnostics_json(const Diagnostics& d) {
    json failures = json::array();
    for (const auto& f : d.failures) {
        failures.push_back({{"model_id", f.model_id}, {"segment", f.segment}, {"message", f.message}});
    }
    return {{"failures", std::move(failures)}, {"clipped_boxes", d.clipped_boxes}, {"successes", d.successes}};
}

json evaluation_json(std::span<const ImageReport> images, const Metrics& aggregate_metrics,
                     const PipelineConfig& config) {
    json per_image = json::array();
    for (const auto& r : images) {
        json m = metrics_json(r.metrics);
        m["image"] = r.image;
        per_image.push_back(std::move(m));
    }
    return {
        {"matching", {{"protocol", "one-to-one greedy"}, {"iou", config.match_iou}}},
        {"averaging", config.averaging == Averaging::Micro ? "micro" : "macro"},
        {"per_image", std::move(per_image)},
        {"aggregate", metrics_json(aggregate_metrics)},
    };
}

std::string metrics_table(std::span<const ImageReport> images, const Metrics& aggregate_metrics) {
    std::size_t name_width = 9;
    for (const auto& r : images) {
        name_width = std::max(name_width, r.image.size());
    }
    std::ostringstream out;
    const auto row = [&](const std::string& name, const Metrics& m) {
        out << name << std::string(name_width - name.size() + 2, ' ') << fmt("%6.3f", m.precision) << "  "
            << fmt("%6.3f", m.recall) << "  " << fmt("%6.3f", m.f_measure) << "  " << fmt("%5.0f", m.tp) << "  "
            << fmt("%5.0f", m.fp) << "  " << fmt("%5.0f", m.fn) << '\n';
    };
    out << "image" << std::string(name_width - 3, ' ') << "     P       R       F     tp     fp     fn\n";
    for (const auto& r : images) {
        row(r.image, r.metrics);
    }
    row("aggregate", aggregate_metrics);
    return out.str();
}

// ---- configuration -----------------------------------------------------------

void apply_config_json(const json& j, PipelineConfig& c) {
    require_object(j, "<root>");
    for (const auto& [key, value] : j.items()) {
        if (key == "cell_size") {
            c.cell_size = get<int>(value, "cell_size");
        } else if (key == "dilation") {
            require_object(value, "dilation");
            for (const auto& [k, v] : value.items()) {
                if (k == "sigma") {
                    c.dilation_sigma = get<double>(v, "dilation.sigma");
                } else if (k == "radius") {
                    c.dilation_radius = get<int>(v, "dilation.radius");
                } else {
                    unknown_key("dilation.", k);
                }
            }
        } else if (key == "k") {
            c.classes = get<int>(value, "k");
        } else if (key == "k_range") {
            if (value.is_null()) {
                c.class_range.reset();
            } else {
                const auto r = get<std::vector<int>>(value, "k_range");
                if (r.size() != 2) {
                    throw InputError("config: 'k_range' must be [min, max]");
                }
                c.class_range = std::pair{r[0], r[1]};
            }
        } else if (key == "beta") {
            c.beta = get<double>(value, "beta");
        } else if (key == "ensemble") {
            require_object(value, "ensemble");
            for (const auto& [k, v] : value.items()) {
                if (k == "p_th") {
                    c.ensemble.p_th = unit_value(v, "ensemble.p_th");
                } else if (k == "p_tl") {
                    c.ensemble.p_tl = unit_value(v, "ensemble.p_tl");
                } else if (k == "nms_threshold") {
                    c.ensemble.nms_threshold = unit_value(v, "ensemble.nms_threshold");
                } else {
                    unknown_key("ensemble.", k);
                }
            }
        } else if (key == "entropy_threshold") {
            c.entropy_threshold = get<double>(value, "entropy_threshold");
        } else if (key == "padding") {
            c.padding = get<int>(value, "padding");
        } else if (key == "min_segment_cells") {
            c.min_segment_cells = get<int>(value, "min_segment_cells");
        } else if (key == "detectors") {
            if (!value.is_array()) {
                throw InputError("config: 'detectors' must be an array");
            }
            c.detectors.clear();
            for (const auto& d : value) {
                c.detectors.push_back(detector_from_json(d));
            }
        } else if (key == "seed") {
            c.seed = get<std::uint64_t>(value, "seed");
        } else if (key == "include_full_image") {
            c.include_full_image = get<bool>(value, "include_full_image");
        } else if (key == "features_on_dilated") {
            c.features_on_dilated = get<bool>(value, "features_on_dilated");
        } else if (key == "connectivity") {
            const int n = get<int>(value, "connectivity");
            if (n != 4 && n != 8) {
                throw InputError("config: 'connectivity' must be 4 or 8");
            }
            c.connectivity = n == 4 ? Connectivity::Four : Connectivity::Eight;
        } else if (key == "distance_average") {
            const auto s = get<std::string>(value, "distance_average");
            if (s == "neighbor_pairs") {
                c.distance_average = DistanceAverage::NeighborPairs;
            } else if (s == "all_pairs") {
                c.distance_average = DistanceAverage::AllPairs;
            } else {
                throw InputError("config: 'distance_average' must be 'neighbor_pairs' or 'all_pairs'");
            }
        } else if (key == "filter_support") {
            c.filter_support = get<int>(value, "filter_support");
        } else if (key == "derivative_scales") {
            c.derivative_scales = get<int>(value, "derivative_scales");
        } else if (key == "em") {
            require_object(value, "em");
            for (const auto& [k, v] : value.items()) {
                if (k == "max_iter") {
                    c.em.max_iter = get<int>(v, "em.max_iter");
                } else if (k == "tol") {
                    c.em.tol = get<double>(v, "em.tol");
                } else {
                    unknown_key("em.", k);
                }
            }
        } else if (key == "icm_max_sweeps") {
            c.icm_max_sweeps = get<int>(value, "icm_max_sweeps");
        } else if (key == "workers") {
            c.workers = get<int>(value, "workers");
        } else if (key == "match_iou") {
            c.match_iou = unit_value(value, "match_iou");
        } else if (key == "averaging") {
            const auto s = get<std::string>(value, "averaging");
            if (s == "micro") {
                c.averaging = Averaging::Micro;
            } else if (s == "macro") {
                c.averaging = Averaging::Macro;
            } else {
                throw InputError("config: 'averaging' must be 'micro' or 'macro'");
            }
        } else {
            unknown_key("", key);
        }
    }
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    PipelineConfig c;
    apply_config_json(j, c);
    return c;
}

json config_json(const PipelineConfig& c) {
    json detectors = json::array();
    for (const auto& d : c.detectors) {
        json e = {{"kind", d.kind == DetectorKind::Builtin ? "builtin" : "external"},
                  {"model_id", d.model_id},
                  {"accuracy", d.accuracy}};
        if (d.kind == DetectorKind::External) {
            e["endpoint"] = d.endpoint;
        }
        detectors.push_back(std::move(e));
    }
    json out = {
        {"cell_size", c.cell_size},
        {"dilation", {{"sigma", c.dilation_sigma}, {"radius", c.dilation_radius}}},
        {"k", c.classes},
        {"k_range", nullptr},
        {"beta", c.beta},
        {"ensemble", {{"p_th", c.ensemble.p_th}, {"p_tl", c.ensemble.p_tl}, {"nms_threshold", c.ensemble.nms_threshold}}},
        {"entropy_threshold", c.entropy_threshold},
        {"padding", c.padding},
        {"min_segment_cells", c.min_segment_cells},
        {"detectors", std::move(detectors)},
        {"seed", c.seed},
        {"include_full_image", c.include_full_image},
        {"features_on_dilated", c.features_on_dilated},
        {"connectivity", static_cast<int>(c.connectivity)},
        {"distance_average", c.distance_average == DistanceAverage::NeighborPairs ? "neighbor_pairs" : "all_pairs"},
        {"filter_support", c.filter_support},
        {"derivative_scales", c.derivative_scales},
        {"em", {{"max_iter", c.em.max_iter}, {"tol", c.em.tol}}},
        {"icm_max_sweeps", c.icm_max_sweeps},
        {"workers", c.workers},
        {"match_iou", c.match_iou},
        {"averaging", c.averaging == Averaging::Micro ? "micro" : "macro"},
    };
    if (c.class_range) {
        out["k_range"] = {c.class_range->first, c.class_range->second};
    }
    return out;
}

DetectorSpec parse_detector_spec(std::string_view spec) {
    DetectorSpec d;
    std::string_view target = spec;
    std::string model_id;
    if (const auto eq = target.find('='); eq != std::string_view::npos) {
        model_id = std::string(target.substr(0, eq));
        target = target.substr(eq + 1);
        if (model_id.empty()) {
            throw InputError("detector spec '" + std::string(spec) + "': empty model id");
        }
    }
    if (const auto at = target.rfind('@'); at != std::string_view::npos) {
        const auto acc = target.substr(at + 1);
        double v = 0.0;
        const auto [end, ec] = std::from_chars(acc.data(), acc.data() + acc.size(), v);
        if (ec != std::errc() || end != acc.data() + acc.size() || !(v >= 0.0 && v <= 1.0)) {
            throw InputError("detector spec '" + std::string(spec) + "': accuracy must be a number in [0,1]");
        }
        d.accuracy = v;
        target = target.substr(0, at);
    }
    if (target == "builtin") {
        d.kind = DetectorKind::Builtin;
        d.model_id = model_id.empty() ? "builtin" : model_id;
    } else {
        const Endpoint e = parse_endpoint(target);
        d.kind = DetectorKind::External;
        d.endpoint = e.host + ":" + std::to_string(e.port);
        d.model_id = model_id.empty() ? d.endpoint : model_id;
    }
    return d;
}

std::vector<EnsembleMember> build_members(const PipelineConfig& config) {
    std::vector<EnsembleMember> out;
    for (const auto& d : config.detectors) {
        if (d.kind == DetectorKind::Builtin) {
            ReferenceDetectorParams params;
            params.model_id = d.model_id;
            out.push_back({std::make_shared<ReferenceDetector>(params), {d.model_id, d.accuracy, d.kind}});
        } else {
            out.push_back({std::make_shared<RemoteDetector>(parse_endpoint(d.endpoint), d.model_id),
                           {d.model_id, d.accuracy, d.kind}});
        }
    }
    return out;
}

}  // namespace entroseg
