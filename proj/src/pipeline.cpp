#include "entroseg/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "entroseg/error.hpp"

namespace entroseg {

void PipelineConfig::validate() const {
    const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (cell_size < 2) {
        throw InvalidArgument("config: cell_size must be >= 2");
    }
    if (!(dilation_sigma > 0.0) || dilation_radius < 1) {
        throw InvalidArgument("config: dilation needs sigma > 0 and radius >= 1");
    }
    if (classes < 1) {
        throw InvalidArgument("config: k must be >= 1");
    }
    if (class_range && (class_range->first < 1 || class_range->second < class_range->first)) {
        throw InvalidArgument("config: k_range must be a nonempty range of positive integers");
    }
    if (!(beta >= 0.0)) {
        throw InvalidArgument("config: beta must be >= 0");
    }
    entroseg::validate(ensemble);
    if (!(entropy_threshold >= 0.0 && entropy_threshold <= 8.0)) {
        throw InvalidArgument("config: entropy_threshold must lie in [0,8]");
    }
    if (padding < 0 || min_segment_cells < 1) {
        throw InvalidArgument("config: padding must be >= 0 and min_segment_cells >= 1");
    }
    if (detectors.empty()) {
        throw InvalidArgument("config: at least one detector is required");
    }
    for (const auto& d : detectors) {
        if (!unit(d.accuracy)) {
            throw InvalidArgument("config: detector accuracy must lie in [0,1]");
        }
        if (d.model_id.empty()) {
            throw InvalidArgument("config: detector model_id must not be empty");
        }
        if (d.kind == DetectorKind::External && d.endpoint.empty()) {
            throw InvalidArgument("config: external detector needs an endpoint");
        }
    }
    if (filter_support < 7 || filter_support % 2 == 0) {
        throw InvalidArgument("config: filter_support must be odd and >= 7");
    }
    if (derivative_scales < 1 || derivative_scales > 4) {
        throw InvalidArgument("config: derivative_scales must be in [1,4]");
    }
    if (em.max_iter < 1 || !(em.tol > 0.0) || icm_max_sweeps < 1) {
        throw InvalidArgument("config: em.max_iter, em.tol and icm_max_sweeps must be positive");
    }
    if (workers < 1) {
        throw InvalidArgument("config: workers must be >= 1");
    }
    if (!unit(match_iou)) {
        throw InvalidArgument("config: match_iou must lie in [0,1]");
    }
}

SegmentationResult segment_image(const RasterImage& img, const PipelineConfig& config) {
    config.validate();
    SegmentationResult r;
    r.dilated = dilate(img, DilationKernel::gaussian(config.dilation_sigma, config.dilation_radius));
    const RasterImage& source = config.features_on_dilated ? r.dilated : img;

    r.grid = partition(img.width(), img.height(), config.cell_size);

    // The bank must fit inside the image; shrink the support for small inputs.
    int support = std::min(config.filter_support, std::min(img.width(), img.height()));
    if (support % 2 == 0) {
        --support;
    }
    std::vector<ResponseStack> stacks;
    if (support >= 7) {
        BankConvolver convolver(build_lm_filterbank(support, config.derivative_scales), img.width(), img.height());
        for (int c = 0; c < source.channels(); ++c) {
            stacks.push_back(convolver.pooled(source.channel(c), c));
        }
    }
    const SuperPixelFeatures raw = compute_features(source, stacks, r.grid);
    r.features = standardize(raw);
    r.graph = build_adjacency(r.grid, r.features.features, {config.connectivity, config.distance_average});

    const Eigen::MatrixXd& x = r.features.features.values;
    int classes = config.classes;
    if (config.class_range) {
        std::vector<int> candidates(config.class_range->second - config.class_range->first + 1);
        std::iota(candidates.begin(), candidates.end(), config.class_range->first);
        r.selection = select_k(x, r.graph, candidates, config.seed, config.em);
        classes = r.selection->classes;
    }
    r.em = em_fit(x, r.graph, classes, config.beta, config.seed, config.em);
    r.labels = map_labels(r.em.params, x, r.graph, config.beta, config.icm_max_sweeps, &r.em.field.labels);
    r.segments = merge_segments(r.labels.labels, r.grid, config.padding, config.min_segment_cells,
                                config.connectivity);
    return r;
}

DetectionResult detect_text(const RasterImage& img, const PipelineConfig& config,
                            std::span<const EnsembleMember> members) {
    DetectionResult r;
    r.entropy_bits = shannon_entropy(to_grayscale(img));
    r.entropy_class = classify_entropy(r.entropy_bits, config.entropy_threshold);
    r.segmentation = segment_image(img, config);
    EnsembleOptions opts;
    opts.config = config.ensemble;
    opts.include_full_image = config.include_full_image;
    opts.workers = config.workers;
    r.ensemble = run_ensemble(img, r.segmentation.segments, members, opts);
    return r;
}

std::vector<EnsembleMember> builtin_members(const PipelineConfig& config) {
    std::vector<EnsembleMember> out;
    for (const auto& d : config.detectors) {
        if (d.kind != DetectorKind::Builtin) {
            continue;
        }
        ReferenceDetectorParams params;
        params.model_id = d.model_id;
        out.push_back({std::make_shared<ReferenceDetector>(params), {d.model_id, d.accuracy, DetectorKind::Builtin}});
    }
    return out;
}

}  // namespace entroseg
