#include <algorithm>
#include <mutex>
#include <set>

#include "entroseg/detection.hpp"
#include "entroseg/error.hpp"
#include "entroseg/parallel.hpp"

namespace entroseg {

namespace {

struct TaskResult {
    std::vector<DetBox> boxes;
    Diagnostics diagnostics;
};

}  // namespace

EnsembleResult run_ensemble(const RasterImage& img, const SegmentSet& segments,
                            std::span<const EnsembleMember> members, const EnsembleOptions& options) {
    if (members.empty()) {
        throw InvalidArgument("run_ensemble: at least one detector is required");
    }
    validate(options.config);
    std::vector<DetectorDescriptor> descriptors;
    std::set<std::string> ids;
    for (const auto& m : members) {
        if (!m.detector) {
            throw InvalidArgument("run_ensemble: null detector");
        }
        if (!ids.insert(m.descriptor.model_id).second) {
            throw InvalidArgument("run_ensemble: duplicate model_id '" + m.descriptor.model_id + "'");
        }
        descriptors.push_back(m.descriptor);
    }

    std::vector<PixelRect> regions;
    for (const auto& s : segments.segments) {
        regions.push_back(s.bbox);
    }
    const PixelRect whole{0, 0, img.width(), img.height()};
    if (regions.empty() || options.include_full_image) {
        regions.push_back(whole);
    }

    std::vector<std::mutex> serial(members.size());
    std::vector<TaskResult> results(regions.size() * members.size());
    parallel_for(results.size(), options.workers, [&](std::size_t task) {
        const std::size_t seg = task / members.size();
        const std::size_t mem = task % members.size();
        const auto& member = members[mem];
        const PixelRect& rect = regions[seg];
        TaskResult& out = results[task];
        const std::string& id = member.descriptor.model_id;
        try {
            const RasterImage crop = img.crop(rect);
            const RegionContext ctx{"seg-" + std::to_string(seg), rect.x0, rect.y0, img.width(), img.height()};
            std::vector<DetBox> local;
            if (member.detector->concurrent()) {
                local = member.detector->detect(crop, ctx);
            } else {
                std::lock_guard lock(serial[mem]);
                local = member.detector->detect(crop, ctx);
            }
            for (auto& b : local) {
                validate(b);
                b.model_id = id;
                b.frame = Frame::Segment;
                if (b.x1 < 0 || b.y1 < 0 || b.x2 > rect.width() || b.y2 > rect.height()) {
                    // Outside the crop: keep only the part inside it.
                    b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(rect.width()));
                    b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(rect.width()));
                    b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(rect.height()));
                    b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(rect.height()));
                    ++out.diagnostics.clipped_boxes;
                }
                out.boxes.push_back(
                    to_image_coords(b, rect.x0, rect.y0, img.width(), img.height(), out.diagnostics));
            }
            out.diagnostics.successes[id] += 1;
        } catch (const std::exception& e) {
            out.boxes.clear();
            out.diagnostics.failures.push_back({id, static_cast<int>(seg), e.what()});
        }
    });

    EnsembleResult r;
    r.segments_used = static_cast<int>(regions.size());
    BoxesByModel pooled;
    for (const auto& d : descriptors) {
        pooled[d.model_id];
    }
    for (const auto& t : results) {
        r.diagnostics.merge(t.diagnostics);
        for (const auto& b : t.boxes) {
            pooled[b.model_id].push_back(b);
        }
    }
    r.boxes = selective_nms(pooled, descriptors, options.config);
    return r;
}

}  // namespace entroseg
