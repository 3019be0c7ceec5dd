#include <gtest/gtest.h>

#include <atomic>
#include <functional>
#include <stdexcept>

#include "entroseg/detection.hpp"
#include "entroseg/error.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace entroseg;

namespace {

// Returns boxes scripted per segment id; throws for segments listed in `fail`.
class ScriptedDetector : public TextDetector {
public:
    std::map<std::string, std::vector<DetBox>> script;
    std::set<std::string> fail;
    std::vector<RegionContext> seen;
    std::mutex mu;

    std::vector<DetBox> detect(const RasterImage&, const RegionContext& context) override {
        {
            std::lock_guard lock(mu);
            seen.push_back(context);
        }
        if (fail.count(context.segment_id) != 0) {
            throw std::runtime_error("scripted failure");
        }
        auto it = script.find(context.segment_id);
        return it == script.end() ? std::vector<DetBox>{} : it->second;
    }
};

DetBox box(double x1, double y1, double x2, double y2, double prob) {
    return {x1, y1, x2, y2, prob, "ignored-by-orchestrator"};
}

SegmentSet two_segments() {
    SegmentSet s;
    s.width = 100;
    s.height = 60;
    s.segments.push_back({0, {0}, {0, 0, 50, 60}});
    s.segments.push_back({1, {1}, {40, 10, 100, 60}});
    return s;
}

}  // namespace

TEST(Ensemble, SingleDetectorWholeImageEqualsDetectorThenNms) {
    const RasterImage img(80, 40, 3, 0.5);
    auto det = std::make_shared<ScriptedDetector>();
    det->script["seg-0"] = {box(0, 0, 10, 10, 0.95), box(0, 0, 10, 10, 0.91), box(30, 5, 50, 20, 0.99)};
    const std::vector<EnsembleMember> members{{det, {"only", 0.8}}};
    const auto r = run_ensemble(img, SegmentSet{}, members, {});
    EXPECT_EQ(r.segments_used, 1);
    std::vector<DetBox> expect = det->script["seg-0"];
    for (auto& b : expect) {
        b.model_id = "only";
    }
    std::erase_if(expect, [](const DetBox& b) { return b.prob < 0.9; });
    for (auto& b : expect) {
        b.prob = 1.0;
    }
    EXPECT_EQ(r.boxes, nms(expect, 0.95));
    ASSERT_EQ(det->seen.size(), 1u);
    EXPECT_EQ(det->seen[0].segment_id, "seg-0");
}

TEST(Ensemble, TwoScriptedDetectorsMatchHandTrace) {
    const RasterImage img(100, 60, 3, 0.5);
    auto a = std::make_shared<ScriptedDetector>();
    auto b = std::make_shared<ScriptedDetector>();
    a->script["seg-0"] = {box(5, 5, 25, 15, 0.92), box(30, 30, 45, 40, 0.85)};
    a->script["seg-1"] = {box(0, 0, 20, 10, 0.97)};
    b->script["seg-0"] = {box(5, 5, 25, 15, 0.99), box(30, 30, 45, 40, 0.83), box(1, 50, 9, 58, 0.7)};
    b->script["seg-1"] = {box(30, 20, 50, 40, 0.81)};
    const std::vector<EnsembleMember> members{{a, {"alpha", 0.9}}, {b, {"beta", 0.6}}};
    const auto r = run_ensemble(img, two_segments(), members, {});

    // alpha is M_q: (5,5,25,15) and seg-1's (40,10,60,20) pass 0.9 and become
    // 1.0; (30,30,45,40)@0.85 is dropped. beta keeps boxes >= 0.8: its copy of
    // (5,5,25,15) is suppressed by alpha's, (30,30,45,40)@0.83 survives, and
    // seg-1's (70,30,90,50)@0.81 survives.
    const std::vector<DetBox> expect{
        {5, 5, 25, 15, 1.0, "alpha"},
        {40, 10, 60, 20, 1.0, "alpha"},
        {30, 30, 45, 40, 0.83, "beta"},
        {70, 30, 90, 50, 0.81, "beta"},
    };
    EXPECT_EQ(r.boxes, expect);

    BoxesByModel by;
    by["alpha"] = {{5, 5, 25, 15, 0.92, "alpha"}, {30, 30, 45, 40, 0.85, "alpha"}, {40, 10, 60, 20, 0.97, "alpha"}};
    by["beta"] = {{5, 5, 25, 15, 0.99, "beta"}, {30, 30, 45, 40, 0.83, "beta"}, {1, 50, 9, 58, 0.7, "beta"},
                  {70, 30, 90, 50, 0.81, "beta"}};
    std::vector<DetectorDescriptor> d{{"alpha", 0.9}, {"beta", 0.6}};
    EXPECT_EQ(r.boxes, oracle::snms_trace(by, d, {}));
}

TEST(Ensemble, RegionsCarryOriginsAndImageSize) {
    const RasterImage img(100, 60, 1, 0.5);
    auto det = std::make_shared<ScriptedDetector>();
    const std::vector<EnsembleMember> members{{det, {"m", 0.5}}};
    EnsembleOptions opts;
    opts.include_full_image = true;
    const auto r = run_ensemble(img, two_segments(), members, opts);
    EXPECT_EQ(r.segments_used, 3);
    ASSERT_EQ(det->seen.size(), 3u);
    std::sort(det->seen.begin(), det->seen.end(),
              [](const RegionContext& x, const RegionContext& y) { return x.segment_id < y.segment_id; });
    EXPECT_EQ(det->seen[1].origin_x, 40);
    EXPECT_EQ(det->seen[1].origin_y, 10);
    EXPECT_EQ(det->seen[2].origin_x, 0);
    EXPECT_EQ(det->seen[2].image_width, 100);
    EXPECT_EQ(det->seen[2].image_height, 60);
}

TEST(Ensemble, FailuresAreRecordedAndOthersContinue) {
    const RasterImage img(100, 60, 3, 0.5);
    auto a = std::make_shared<ScriptedDetector>();
    a->fail.insert("seg-0");
    a->script["seg-1"] = {box(0, 0, 10, 10, 0.95)};
    const std::vector<EnsembleMember> members{{a, {"a", 0.9}}};
    const auto r = run_ensemble(img, two_segments(), members, {});
    ASSERT_EQ(r.diagnostics.failures.size(), 1u);
    EXPECT_EQ(r.diagnostics.failures[0].model_id, "a");
    EXPECT_EQ(r.diagnostics.failures[0].segment, 0);
    EXPECT_EQ(r.diagnostics.successes.at("a"), 1);
    ASSERT_EQ(r.boxes.size(), 1u);
    EXPECT_EQ(r.boxes[0].x1, 40.0);
}

TEST(Ensemble, InvalidBoxesCountAsDetectorFailure) {
    const RasterImage img(100, 60, 3, 0.5);
    auto a = std::make_shared<ScriptedDetector>();
    a->script["seg-0"] = {box(0, 0, 10, 10, 1.5)};
    const std::vector<EnsembleMember> members{{a, {"a", 0.9}}};
    const auto r = run_ensemble(img, SegmentSet{}, members, {});
    EXPECT_TRUE(r.boxes.empty());
    EXPECT_EQ(r.diagnostics.failures.size(), 1u);
}

TEST(Ensemble, OutOfRegionBoxesAreClipped) {
    const RasterImage img(100, 60, 3, 0.5);
    auto a = std::make_shared<ScriptedDetector>();
    a->script["seg-1"] = {box(50, 40, 75, 55, 0.95)};
    const std::vector<EnsembleMember> members{{a, {"a", 0.9}}};
    const auto r = run_ensemble(img, two_segments(), members, {});
    ASSERT_EQ(r.boxes.size(), 1u);
    EXPECT_EQ(r.boxes[0].x2, 100.0);
    EXPECT_EQ(r.boxes[0].y2, 60.0);
    EXPECT_EQ(r.diagnostics.clipped_boxes, 1);
}

TEST(Ensemble, SameDetectorTwiceLeavesNoOverlappingPair) {
    gen::Rng rng(3);
    const RasterImage img(60, 60, 1, 0.5);
    auto det = std::make_shared<ScriptedDetector>();
    det->script["seg-0"] = gen::boxes(rng, 15, "x");
    for (auto& b : det->script["seg-0"]) {
        b.prob = std::max(b.prob, 0.9);
    }
    const std::vector<EnsembleMember> members{{det, {"first", 0.9}}, {det, {"second", 0.7}}};
    const auto r = run_ensemble(img, SegmentSet{}, members, {});
    for (std::size_t i = 0; i < r.boxes.size(); ++i) {
        for (std::size_t j = i + 1; j < r.boxes.size(); ++j) {
            EXPECT_LE(iou(r.boxes[i], r.boxes[j]), 0.95);
        }
    }
}

TEST(Ensemble, ParallelWorkersGiveIdenticalOutput) {
    gen::Rng rng(4);
    const RasterImage img(100, 60, 1, 0.5);
    auto a = std::make_shared<ScriptedDetector>();
    auto b = std::make_shared<ScriptedDetector>();
    for (const char* seg : {"seg-0", "seg-1"}) {
        a->script[seg] = gen::boxes(rng, 10, "a", 40);
        b->script[seg] = gen::boxes(rng, 10, "b", 40);
    }
    const std::vector<EnsembleMember> members{{a, {"a", 0.9}}, {b, {"b", 0.6}}};
    EnsembleOptions serial;
    EnsembleOptions parallel;
    parallel.workers = 4;
    EXPECT_EQ(run_ensemble(img, two_segments(), members, serial).boxes,
              run_ensemble(img, two_segments(), members, parallel).boxes);
}

TEST(Ensemble, RejectsBadMemberLists) {
    const RasterImage img(10, 10, 1, 0.5);
    EXPECT_THROW(run_ensemble(img, SegmentSet{}, {}, {}), InvalidArgument);
    auto det = std::make_shared<ScriptedDetector>();
    const std::vector<EnsembleMember> dup{{det, {"m", 0.9}}, {det, {"m", 0.5}}};
    EXPECT_THROW(run_ensemble(img, SegmentSet{}, dup, {}), InvalidArgument);
    const std::vector<EnsembleMember> null{{nullptr, {"m", 0.9}}};
    EXPECT_THROW(run_ensemble(img, SegmentSet{}, null, {}), InvalidArgument);
}
