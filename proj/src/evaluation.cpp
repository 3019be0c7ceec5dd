#include "entroseg/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "entroseg/error.hpp"

namespace entroseg {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool parse_number(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) {
        return false;
    }
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

// Returns the next field and advances past one comma and/or whitespace run.
std::string_view next_field(std::string_view& rest) {
    rest = trim(rest);
    std::size_t end = 0;
    while (end < rest.size() && rest[end] != ',' && rest[end] != ' ' && rest[end] != '\t') {
        ++end;
    }
    const std::string_view field = rest.substr(0, end);
    rest.remove_prefix(end);
    rest = trim(rest);
    if (!rest.empty() && rest.front() == ',') {
        rest.remove_prefix(1);
    }
    return field;
}

}  // namespace

std::vector<GroundTruthBox> parse_ground_truth(std::istream& in, const std::string& source) {
    std::vector<GroundTruthBox> out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        std::string_view rest(line);
        if (number == 1 && rest.starts_with("\xEF\xBB\xBF")) {
            rest.remove_prefix(3);
        }
        if (trim(rest).empty()) {
            continue;
        }
        const auto fail = [&](const std::string& why) {
            return InputError(source + ":" + std::to_string(number) + ": " + why);
        };
        double v[4];
        for (double& x : v) {
            if (!parse_number(next_field(rest), x)) {
                throw fail("expected four numeric coordinates");
            }
        }
        GroundTruthBox box{v[0], v[1], v[2], v[3], std::nullopt, false};
        if (box.x1 > box.x2 || box.y1 > box.y2) {
            throw fail("box corners out of order");
        }
        std::string_view text = trim(rest);
        if (!text.empty()) {
            if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
                text = text.substr(1, text.size() - 2);
            } else if (text.front() == '"') {
                throw fail("unterminated transcription");
            }
            box.transcription = std::string(text);
            box.ignore = text == "###";
        }
        out.push_back(std::move(box));
    }
    return out;
}

std::vector<GroundTruthBox> load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open ground truth file: " + path.string());
    }
    return parse_ground_truth(in, path.string());
}

Metrics metrics_from_counts(int tp, int fp, int fn) {
    Metrics m;
    m.tp = tp;
    m.fp = fp;
    m.fn = fn;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 1.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 1.0;
    const double pr = m.precision + m.recall;
    m.f_measure = pr > 0.0 ? 2.0 * m.precision * m.recall / pr : 0.0;
    return m;
}

Metrics match_detections(std::span<const DetBox> detections, std::span<const GroundTruthBox> truths,
                         double match_iou) {
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detections[a].prob > detections[b].prob;
    });
    std::vector<DetBox> gt_boxes;
    gt_boxes.reserve(truths.size());
    for (const auto& t : truths) {
        gt_boxes.push_back({t.x1, t.y1, t.x2, t.y2, 1.0, {}, Frame::Image});
    }
    std::vector<bool> matched(truths.size(), false);
    int tp = 0;
    int fp = 0;
    for (std::size_t d : order) {
        const DetBox& det = detections[d];
        double best = -1.0;
        std::size_t best_idx = truths.size();
        bool overlaps_ignored = false;
        for (std::size_t t = 0; t < truths.size(); ++t) {
            const double o = iou(det, gt_boxes[t]);
            if (truths[t].ignore) {
                overlaps_ignored = overlaps_ignored || o >= match_iou;
                continue;
            }
            if (!matched[t] && o > best) {
                best = o;
                best_idx = t;
            }
        }
        if (best_idx < truths.size() && best >= match_iou) {
            matched[best_idx] = true;
            ++tp;
        } else if (!overlaps_ignored) {
            ++fp;
        }
    }
    int fn = 0;
    for (std::size_t t = 0; t < truths.size(); ++t) {
        if (!truths[t].ignore && !matched[t]) {
            ++fn;
        }
    }
    return metrics_from_counts(tp, fp, fn);
}

Metrics aggregate(std::span<const Metrics> per_image, Averaging mode) {
    if (per_image.empty()) {
        throw InvalidArgument("aggregate: no per-image metrics");
    }
    int tp = 0;
    int fp = 0;
    int fn = 0;
    double p = 0.0;
    double r = 0.0;
    for (const auto& m : per_image) {
        tp += m.tp;
        fp += m.fp;
        fn += m.fn;
        p += m.precision;
        r += m.recall;
    }
    if (mode == Averaging::Micro) {
        return metrics_from_counts(tp, fp, fn);
    }
    Metrics m;
    m.tp = tp;
    m.fp = fp;
    m.fn = fn;
    m.precision = p / static_cast<double>(per_image.size());
    m.recall = r / static_cast<double>(per_image.size());
    const double pr = m.precision + m.recall;
    m.f_measure = pr > 0.0 ? 2.0 * m.precision * m.recall / pr : 0.0;
    return m;
}

}  // namespace entroseg
