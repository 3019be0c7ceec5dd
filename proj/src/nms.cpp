#include <algorithm>
#include <numeric>

#include "entroseg/detection.hpp"
#include "entroseg/error.hpp"

namespace entroseg {

void validate(const DetBox& box) {
    if (!(box.x1 <= box.x2) || !(box.y1 <= box.y2)) {
        throw InvalidArgument("DetBox: expected x1 <= x2 and y1 <= y2");
    }
    if (!(box.prob >= 0.0 && box.prob <= 1.0)) {
        throw InvalidArgument("DetBox: prob outside [0,1]");
    }
}

void validate(const EnsembleConfig& config) {
    const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(config.p_th) || !unit(config.p_tl) || !unit(config.nms_threshold)) {
        throw InvalidArgument("EnsembleConfig: thresholds must lie in [0,1]");
    }
    if (config.p_tl > config.p_th) {
        throw InvalidArgument("EnsembleConfig: p_tl must not exceed p_th");
    }
}

double iou(const DetBox& a, const DetBox& b) {
    const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<DetBox> nms(std::span<const DetBox> boxes, double nms_threshold, const std::string* preferred_model) {
    if (!(nms_threshold >= 0.0 && nms_threshold <= 1.0)) {
        throw InvalidArgument("nms: threshold must lie in [0,1]");
    }
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        const DetBox& a = boxes[i];
        const DetBox& b = boxes[j];
        if (a.prob != b.prob) {
            return a.prob > b.prob;
        }
        if (preferred_model != nullptr) {
            const bool pa = a.model_id == *preferred_model;
            const bool pb = b.model_id == *preferred_model;
            if (pa != pb) {
                return pa;
            }
        }
        return a.model_id < b.model_id;
    });

    std::vector<bool> removed(order.size(), false);
    std::vector<DetBox> kept;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (removed[i]) {
            continue;
        }
        const DetBox& keep = boxes[order[i]];
        kept.push_back(keep);
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            if (!removed[j] && iou(keep, boxes[order[j]]) > nms_threshold) {
                removed[j] = true;
            }
        }
    }
    return kept;
}

std::size_t best_model(std::span<const DetectorDescriptor> descriptors) {
    if (descriptors.empty()) {
        throw InvalidArgument("best_model: no detectors");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < descriptors.size(); ++i) {
        const auto& d = descriptors[i];
        const auto& b = descriptors[best];
        if (d.accuracy > b.accuracy || (d.accuracy == b.accuracy && d.model_id < b.model_id)) {
            best = i;
        }
    }
    return best;
}

std::vector<DetBox> selective_nms(const BoxesByModel& boxes_by_model,
                                  std::span<const DetectorDescriptor> descriptors,
                                  const EnsembleConfig& config) {
    validate(config);
    for (const auto& [id, boxes] : boxes_by_model) {
        const bool known = std::any_of(descriptors.begin(), descriptors.end(),
                                       [&](const DetectorDescriptor& d) { return d.model_id == id; });
        if (!known) {
            throw InvalidArgument("selective_nms: unknown model_id '" + id + "'");
        }
        for (const auto& b : boxes) {
            if (b.model_id != id) {
                throw InvalidArgument("selective_nms: box model_id does not match its group");
            }
        }
    }
    const std::string& best = descriptors[best_model(descriptors)].model_id;

    std::vector<DetBox> pool;
    for (const auto& [id, boxes] : boxes_by_model) {
        const bool is_best = id == best;
        for (const auto& b : boxes) {
            if (is_best) {
                if (b.prob >= config.p_th) {
                    DetBox boosted = b;
                    boosted.prob = 1.0;
                    pool.push_back(std::move(boosted));
                }
            } else if (b.prob >= config.p_tl) {
                pool.push_back(b);
            }
        }
    }
    return nms(pool, config.nms_threshold, &best);
}

void Diagnostics::merge(const Diagnostics& other) {
    failures.insert(failures.end(), other.failures.begin(), other.failures.end());
    clipped_boxes += other.clipped_boxes;
    for (const auto& [id, n] : other.successes) {
        successes[id] += n;
    }
}

DetBox to_image_coords(const DetBox& box, int origin_x, int origin_y) {
    DetBox out = box;
    out.x1 += origin_x;
    out.x2 += origin_x;
    out.y1 += origin_y;
    out.y2 += origin_y;
    out.frame = Frame::Image;
    return out;
}

DetBox to_image_coords(const DetBox& box, int origin_x, int origin_y, int width, int height,
                       Diagnostics& diag) {
    DetBox out = to_image_coords(box, origin_x, origin_y);
    const double w = width;
    const double h = height;
    if (out.x1 < 0.0 || out.y1 < 0.0 || out.x2 > w || out.y2 > h) {
        out.x1 = std::clamp(out.x1, 0.0, w);
        out.x2 = std::clamp(out.x2, 0.0, w);
        out.y1 = std::clamp(out.y1, 0.0, h);
        out.y2 = std::clamp(out.y2, 0.0, h);
        ++diag.clipped_boxes;
    }
    return out;
}

}  // namespace entroseg
