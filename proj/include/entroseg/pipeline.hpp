#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entroseg/detection.hpp"
#include "entroseg/evaluation.hpp"
#include "entroseg/filterbank.hpp"
#include "entroseg/image.hpp"
#include "entroseg/segmentation.hpp"
#include "entroseg/superpixel.hpp"

namespace entroseg {

struct DetectorSpec {
    DetectorKind kind = DetectorKind::Builtin;
    std::string model_id = "builtin";
    double accuracy = 0.5;
    std::string endpoint;  // host:port for external detectors
};

struct PipelineConfig {
    int cell_size = kDefaultCellSize;
    double dilation_sigma = 2.0;
    int dilation_radius = 5;
    int classes = kDefaultClasses;
    std::optional<std::pair<int, int>> class_range;  // inclusive; runs select_k when set
    double beta = kDefaultBeta;
    EnsembleConfig ensemble;
    double entropy_threshold = kDefaultEntropyThreshold;
    int padding = kDefaultPadding;
    int min_segment_cells = 1;
    std::vector<DetectorSpec> detectors{DetectorSpec{}};
    std::uint64_t seed = 0;
    bool include_full_image = false;
    bool features_on_dilated = true;
    Connectivity connectivity = Connectivity::Four;
    DistanceAverage distance_average = DistanceAverage::NeighborPairs;
    int filter_support = kDefaultFilterSupport;
    int derivative_scales = kDefaultDerivativeScales;
    EmOptions em;
    int icm_max_sweeps = 20;
    int workers = 1;
    double match_iou = kDefaultMatchIou;
    Averaging averaging = Averaging::Micro;

    // Throws InvalidArgument on out-of-range values.
    void validate() const;
};

struct SegmentationResult {
    RasterImage dilated;
    SuperPixelGrid grid;
    StandardizedFeatures features;
    AdjacencyGraph graph;
    std::optional<KSelection> selection;
    EmResult em;
    LabelField labels;  // ICM labels
    SegmentSet segments;
};

// Dilation, filter responses, super-pixel features, neighbour graph, EM, ICM
// and segment merging. Deterministic for a fixed config.seed.
SegmentationResult segment_image(const RasterImage& img, const PipelineConfig& config);

struct DetectionResult {
    double entropy_bits = 0.0;
    EntropyClass entropy_class = EntropyClass::SceneLike;
    SegmentationResult segmentation;
    EnsembleResult ensemble;
};

DetectionResult detect_text(const RasterImage& img, const PipelineConfig& config,
                            std::span<const EnsembleMember> members);

// Ensemble members for the builtin entries of config.detectors. External
// entries are skipped; the io layer supplies those.
std::vector<EnsembleMember> builtin_members(const PipelineConfig& config);

}  // namespace entroseg
