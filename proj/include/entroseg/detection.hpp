#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "entroseg/image.hpp"
#include "entroseg/segmentation.hpp"

namespace entroseg {

enum class Frame { Image, Segment };

// Axis-aligned box covering [x1, x2) x [y1, y2) with the probability that it
// contains text, attributed to the model that produced it.
struct DetBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;
    double prob = 0.0;
    std::string model_id;
    Frame frame = Frame::Image;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return (x2 - x1) * (y2 - y1); }
    friend bool operator==(const DetBox&, const DetBox&) = default;
};

// Throws InvalidArgument unless x1 <= x2, y1 <= y2 and prob in [0,1].
void validate(const DetBox& box);

enum class DetectorKind { Builtin, External };

struct DetectorDescriptor {
    std::string model_id;
    double accuracy = 0.0;  // validation F-score
    DetectorKind kind = DetectorKind::Builtin;
};

struct EnsembleConfig {
    double p_th = 0.9;   // threshold for the most accurate model
    double p_tl = 0.8;   // threshold for every other model
    double nms_threshold = 0.95;
};

void validate(const EnsembleConfig& config);

// Intersection over union; 0 when the union is empty.
double iou(const DetBox& a, const DetBox& b);

// Greedy suppression: stable sort by prob descending (ties: `preferred_model`
// first when given, then model_id, then input order); every survivor removes
// later boxes with IoU strictly greater than the threshold.
std::vector<DetBox> nms(std::span<const DetBox> boxes, double nms_threshold,
                        const std::string* preferred_model = nullptr);

// Index of the most accurate descriptor; ties go to the smallest model_id.
std::size_t best_model(std::span<const DetectorDescriptor> descriptors);

using BoxesByModel = std::map<std::string, std::vector<DetBox>>;

// The best model's boxes below p_th are dropped and the rest raised to 1;
// other models' boxes below p_tl are dropped; the union goes through nms.
std::vector<DetBox> selective_nms(const BoxesByModel& boxes_by_model,
                                  std::span<const DetectorDescriptor> descriptors,
                                  const EnsembleConfig& config);

struct Diagnostics {
    struct Failure {
        std::string model_id;
        int segment = -1;
        std::string message;
    };
    std::vector<Failure> failures;
    int clipped_boxes = 0;
    std::map<std::string, int> successes;  // completed tasks per model

    void merge(const Diagnostics& other);
};

// Translates a segment-frame box into the image frame.
DetBox to_image_coords(const DetBox& box, int origin_x, int origin_y);
// As above, then clips to [0,width] x [0,height], counting clips in `diag`.
DetBox to_image_coords(const DetBox& box, int origin_x, int origin_y, int width, int height,
                       Diagnostics& diag);

// Sides of a region that were cut out of a larger image rather than lying on
// the image border.
struct CutSides {
    bool left = false;
    bool top = false;
    bool right = false;
    bool bottom = false;
};

struct RegionContext {
    std::string segment_id;  // "seg-<index>"
    int origin_x = 0;
    int origin_y = 0;
    int image_width = 0;  // 0 when unknown
    int image_height = 0;

    CutSides cut_sides(int region_width, int region_height) const;
};

// A text detector taking part in the ensemble. Boxes are returned in the
// region's own frame and must lie within it.
class TextDetector {
public:
    virtual ~TextDetector() = default;
    virtual std::vector<DetBox> detect(const RasterImage& region, const RegionContext& context) = 0;
    // false: the orchestrator serialises calls to this detector.
    virtual bool concurrent() const { return true; }
};

struct ReferenceDetectorParams {
    std::string model_id = "builtin";
    int window = 15;               // local-mean window, pixels
    double offset = 0.05;          // ink must be this much darker than the local mean
    int min_component_pixels = 4;  // specks below this are ignored before merging
    double merge_gap = 0.8;        // x median component height
    double min_vertical_overlap = 0.5;  // x the shorter height
    double merge_height_ratio = 2.0;   // taller/shorter limit for merging
    double min_aspect = 0.2;
    double max_aspect = 20.0;
    double min_height = 6.0;
    double max_height_fraction = 0.9;
    double edge_threshold = 0.25;  // Sobel magnitude counted as an edge pixel
    double edge_density_ref = 0.3;  // density mapped to prob 1
    int min_region = 8;
};

// Dark-on-light text lines by adaptive binarisation and horizontal grouping of
// connected components. prob is the candidate's normalised edge density.
// Candidates touching a cut side are truncated by the crop and dropped.
std::vector<DetBox> reference_detector(const RasterImage& region, const ReferenceDetectorParams& params = {},
                                       const CutSides& cuts = {});

class ReferenceDetector : public TextDetector {
public:
    explicit ReferenceDetector(ReferenceDetectorParams params = {}) : params_(std::move(params)) {}
    std::vector<DetBox> detect(const RasterImage& region, const RegionContext& context) override;
    const ReferenceDetectorParams& params() const { return params_; }

private:
    ReferenceDetectorParams params_;
};

struct EnsembleMember {
    std::shared_ptr<TextDetector> detector;
    DetectorDescriptor descriptor;
};

struct EnsembleOptions {
    EnsembleConfig config;
    bool include_full_image = false;
    int workers = 1;
};

struct EnsembleResult {
    std::vector<DetBox> boxes;  // image frame, prob descending
    Diagnostics diagnostics;
    int segments_used = 0;
};

// Runs every detector on every segment crop, maps boxes to the image frame
// and fuses them once with selective_nms. A whole-image segment is used when
// `segments` is empty, and appended when include_full_image is set.
EnsembleResult run_ensemble(const RasterImage& img, const SegmentSet& segments,
                            std::span<const EnsembleMember> members, const EnsembleOptions& options);

}  // namespace entroseg
