#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "entroseg/detection.hpp"
#include "entroseg/evaluation.hpp"
#include "entroseg/pipeline.hpp"

namespace entroseg {

// ---- images ---------------------------------------------------------------

// PNG, JPEG and anything else OpenCV decodes. 8- and 16-bit samples are
// scaled to [0,1]; colour comes back as RGB, alpha is dropped. Throws
// InputError when the file is missing or cannot be decoded.
RasterImage load_image(const std::filesystem::path& path);
RasterImage decode_image(std::span<const std::uint8_t> bytes);

// Writes an 8-bit image; the format follows the extension. Throws
// PipelineError when the file cannot be written.
void save_image(const std::filesystem::path& path, const RasterImage& img);
std::vector<std::uint8_t> encode_png(const RasterImage& img);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws InputError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

// RGB copy of `img` with predictions outlined in blue and ground truth in red.
RasterImage draw_overlay(const RasterImage& img, std::span<const DetBox> predictions,
                         std::span<const GroundTruthBox> truths = {});

// One colour per class label, painted over each cell.
RasterImage label_map(std::span<const int> labels, const SuperPixelGrid& grid);

// ---- JSON -----------------------------------------------------------------

nlohmann::json to_json(const DetBox& box);
// [{x1,y1,x2,y2,prob,model_id}, ...]
nlohmann::json detections_json(std::span<const DetBox> boxes);
std::vector<DetBox> detections_from_json(const nlohmann::json& j);

nlohmann::json segments_json(const SegmentationResult& result);
nlohmann::json metrics_json(const Metrics& m);
nlohmann::json diagnostics_json(const Diagnostics& d);

struct ImageReport {
    std::string image;
    Metrics metrics;
};

nlohmann::json evaluation_json(std::span<const ImageReport> images, const Metrics& aggregate_metrics,
                               const PipelineConfig& config);
// Fixed-width text table: one row per image and an aggregate row.
std::string metrics_table(std::span<const ImageReport> images, const Metrics& aggregate_metrics);

// ---- configuration -----------------------------------------------------------

// Overlays the keys present in `j` onto `config`. Unknown keys and values of
// the wrong type throw InputError.
void apply_config_json(const nlohmann::json& j, PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json config_json(const PipelineConfig& config);

// [MODEL_ID=]TARGET[@ACCURACY] with TARGET `builtin`, `tcp://HOST:PORT` or
// `HOST:PORT`. Throws InputError on malformed specs.
DetectorSpec parse_detector_spec(std::string_view spec);

// ---- ensemble members -----------------------------------------------------

// Builtin and external members for every entry of config.detectors.
std::vector<EnsembleMember> build_members(const PipelineConfig& config);

}  // namespace entroseg
