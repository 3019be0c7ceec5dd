#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entroseg/detection.hpp"

namespace entroseg {

struct GroundTruthBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;
    std::optional<std::string> transcription;
    bool ignore = false;  // transcription "###"
};

struct Metrics {
    double precision = 1.0;
    double recall = 1.0;
    double f_measure = 1.0;
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

inline constexpr double kDefaultMatchIou = 0.5;

// ICDAR2013 ground truth: one `x1,y1,x2,y2,"transcription"` per line. Fields
// may be separated by commas and/or whitespace. Blank lines are skipped.
std::vector<GroundTruthBox> parse_ground_truth(std::istream& in, const std::string& source = "<stream>");
std::vector<GroundTruthBox> load_ground_truth(const std::filesystem::path& path);

// P, R, F from counts. 0/0 precision or recall counts as 1.
Metrics metrics_from_counts(int tp, int fp, int fn);

// Greedy one-to-one matching in prob-descending order. A detection claims the
// unmatched, non-ignored truth with the highest IoU if it reaches match_iou;
// otherwise it is excluded when it overlaps an ignored truth by match_iou,
// else counted as a false positive.
Metrics match_detections(std::span<const DetBox> detections, std::span<const GroundTruthBox> truths,
                         double match_iou = kDefaultMatchIou);

enum class Averaging { Micro, Macro };

// Micro: P/R/F recomputed from summed counts. Macro: mean per-image P and R,
// F from those means. Counts are summed either way.
Metrics aggregate(std::span<const Metrics> per_image, Averaging mode = Averaging::Micro);

}  // namespace entroseg
