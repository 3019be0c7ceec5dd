#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "entroseg/detection.hpp"
#include "entroseg/error.hpp"

namespace entroseg {

namespace {

struct Component {
    int x0 = 0;  // inclusive pixel bounds
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;
    int pixels = 0;

    int height() const { return y1 - y0 + 1; }
    int width() const { return x1 - x0 + 1; }
};

// Foreground where the pixel is darker than its local window mean by `offset`.
std::vector<std::uint8_t> binarize(const GrayImage& gray, int window, double offset) {
    const int w = gray.width();
    const int h = gray.height();
    std::vector<double> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    const auto I = [&](int x, int y) -> double& { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int x = 0; x < w; ++x) {
            row += gray.at(x, y);
            I(x + 1, y + 1) = I(x + 1, y) + row;
        }
    }
    const int half = window / 2;
    std::vector<std::uint8_t> fg(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - half);
        const int y1 = std::min(h, y + half + 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - half);
            const int x1 = std::min(w, x + half + 1);
            const double sum = I(x1, y1) - I(x0, y1) - I(x1, y0) + I(x0, y0);
            const double mean = sum / static_cast<double>((x1 - x0) * (y1 - y0));
            fg[static_cast<std::size_t>(y) * w + x] = gray.at(x, y) < mean - offset ? 1 : 0;
        }
    }
    return fg;
}

// 8-connected components of the foreground mask.
std::vector<Component> components(const std::vector<std::uint8_t>& fg, int w, int h) {
    std::vector<int> label(fg.size(), -1);
    std::vector<Component> out;
    std::vector<int> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (!fg[idx] || label[idx] >= 0) {
                continue;
            }
            const int id = static_cast<int>(out.size());
            Component c{x, y, x, y, 0};
            label[idx] = id;
            stack.push_back(static_cast<int>(idx));
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                const int px = p % w;
                const int py = p / w;
                ++c.pixels;
                c.x0 = std::min(c.x0, px);
                c.x1 = std::max(c.x1, px);
                c.y0 = std::min(c.y0, py);
                c.y1 = std::max(c.y1, py);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = px + dx;
                        const int ny = py + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
                            continue;
                        }
                        const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
                        if (fg[q] && label[q] < 0) {
                            label[q] = id;
                            stack.push_back(static_cast<int>(q));
                        }
                    }
                }
            }
            out.push_back(c);
        }
    }
    return out;
}

bool mergeable(const Component& a, const Component& b, double max_gap, const ReferenceDetectorParams& p) {
    const int overlap = std::min(a.y1, b.y1) - std::max(a.y0, b.y0) + 1;
    const int min_h = std::min(a.height(), b.height());
    const int max_h = std::max(a.height(), b.height());
    if (overlap < p.min_vertical_overlap * min_h || max_h > p.merge_height_ratio * min_h) {
        return false;
    }
    const int gap = std::max(a.x0, b.x0) - std::min(a.x1, b.x1) - 1;
    return gap < max_gap;
}

Component unite(const Component& a, const Component& b) {
    return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1),
            a.pixels + b.pixels};
}

// Fraction of pixels whose normalised Sobel magnitude exceeds the threshold,
// as a prefix-sum table for box queries.
std::vector<int> edge_table(const GrayImage& g, double threshold) {
    const int w = g.width();
    const int h = g.height();
    const auto px = [&](int x, int y) { return g.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
    std::vector<int> table(static_cast<std::size_t>(w + 1) * (h + 1), 0);
    for (int y = 0; y < h; ++y) {
        int row = 0;
        for (int x = 0; x < w; ++x) {
            const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
            row += std::hypot(gx, gy) / 4.0 > threshold ? 1 : 0;
            table[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
                table[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    return table;
}

}  // namespace

std::vector<DetBox> reference_detector(const RasterImage& region, const ReferenceDetectorParams& p,
                                       const CutSides& cuts) {
    if (region.width() < p.min_region || region.height() < p.min_region) {
        throw InvalidArgument("reference_detector: region smaller than 8x8");
    }
    const GrayImage gray = to_grayscale(region);
    const int w = gray.width();
    const int h = gray.height();
    const auto fg = binarize(gray, p.window, p.offset);

    std::vector<Component> parts;
    for (const auto& c : components(fg, w, h)) {
        if (c.pixels >= p.min_component_pixels) {
            parts.push_back(c);
        }
    }
    if (parts.empty()) {
        return {};
    }
    std::vector<int> heights;
    heights.reserve(parts.size());
    for (const auto& c : parts) {
        heights.push_back(c.height());
    }
    std::nth_element(heights.begin(), heights.begin() + static_cast<std::ptrdiff_t>(heights.size() / 2), heights.end());
    const double max_gap = p.merge_gap * heights[heights.size() / 2];

    std::sort(parts.begin(), parts.end(), [](const Component& a, const Component& b) {
        return std::pair(a.x0, a.y0) < std::pair(b.x0, b.y0);
    });
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < parts.size() && !changed; ++i) {
            for (std::size_t j = i + 1; j < parts.size(); ++j) {
                if (mergeable(parts[i], parts[j], max_gap, p)) {
                    parts[i] = unite(parts[i], parts[j]);
                    parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(j));
                    changed = true;
                    break;
                }
            }
        }
    }

    const auto edges = edge_table(gray, p.edge_threshold);
    const auto edge_count = [&](const Component& c) {
        const auto T = [&](int x, int y) { return edges[static_cast<std::size_t>(y) * (w + 1) + x]; };
        return T(c.x1 + 1, c.y1 + 1) - T(c.x0, c.y1 + 1) - T(c.x1 + 1, c.y0) + T(c.x0, c.y0);
    };

    std::vector<DetBox> out;
    for (const auto& c : parts) {
        // A neighbour within merging distance beyond a cut side would have
        // joined the candidate, so it is only complete if it stays clear.
        if ((cuts.left && c.x0 < max_gap) || (cuts.right && c.x1 > w - 1 - max_gap) || (cuts.top && c.y0 == 0) ||
            (cuts.bottom && c.y1 == h - 1)) {
            continue;
        }
        const double cw = c.width();
        const double ch = c.height();
        const double aspect = cw / ch;
        if (aspect < p.min_aspect || aspect > p.max_aspect) {
            continue;
        }
        if (ch < p.min_height || ch > p.max_height_fraction * h) {
            continue;
        }
        const double density = edge_count(c) / (cw * ch);
        DetBox box;
        box.x1 = c.x0;
        box.y1 = c.y0;
        box.x2 = c.x1 + 1;
        box.y2 = c.y1 + 1;
        box.prob = std::clamp(density / p.edge_density_ref, 0.0, 1.0);
        box.model_id = p.model_id;
        box.frame = Frame::Segment;
        out.push_back(std::move(box));
    }
    std::stable_sort(out.begin(), out.end(), [](const DetBox& a, const DetBox& b) {
        return std::pair(a.y1, a.x1) < std::pair(b.y1, b.x1);
    });
    return out;
}

std::vector<DetBox> ReferenceDetector::detect(const RasterImage& region, const RegionContext& context) {
    return reference_detector(region, params_, context.cut_sides(region.width(), region.height()));
}

CutSides RegionContext::cut_sides(int region_width, int region_height) const {
    if (image_width <= 0 || image_height <= 0) {
        return {};
    }
    return {origin_x > 0, origin_y > 0, origin_x + region_width < image_width,
            origin_y + region_height < image_height};
}

}  // namespace entroseg
