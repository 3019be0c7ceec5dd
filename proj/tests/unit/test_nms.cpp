#include <gtest/gtest.h>

#include <algorithm>

#include "entroseg/detection.hpp"
#include "entroseg/error.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace entroseg;

namespace {

DetBox box(double x1, double y1, double x2, double y2, double prob = 0.5, std::string id = "a") {
    return {x1, y1, x2, y2, prob, std::move(id)};
}

std::vector<DetectorDescriptor> two_models(gen::Rng& rng) {
    const double a = rng.chance(0.2) ? 0.7 : rng.uniform(0.3, 0.95);
    const double b = rng.chance(0.2) ? a : rng.uniform(0.3, 0.95);
    return {{"m1", a}, {"m2", b}};
}

}  // namespace

TEST(Iou, ClosedFormCases) {
    EXPECT_NEAR(iou(box(0, 0, 10, 10), box(0, 0, 10, 10)), 1.0, 1e-12);
    EXPECT_NEAR(iou(box(0, 0, 10, 10), box(20, 20, 30, 30)), 0.0, 1e-12);
    EXPECT_NEAR(iou(box(0, 0, 10, 10), box(5, 0, 15, 10)), 1.0 / 3.0, 1e-12);
}

TEST(Iou, DegenerateAndTouching) {
    EXPECT_EQ(iou(box(0, 0, 0, 0), box(0, 0, 0, 0)), 0.0);
    EXPECT_EQ(iou(box(0, 0, 10, 10), box(10, 0, 20, 10)), 0.0);
    EXPECT_EQ(iou(box(5, 5, 5, 9), box(0, 0, 10, 10)), 0.0);
}

TEST(Iou, SymmetricBoundedAndMatchesOracle) {
    gen::Rng rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        const auto bs = gen::boxes(rng, 2, "a");
        const double v = iou(bs[0], bs[1]);
        EXPECT_EQ(v, iou(bs[1], bs[0]));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v, oracle::box_iou(bs[0], bs[1]), 1e-15);
    }
}

TEST(Validate, RejectsInvertedBoxesAndBadProbs) {
    EXPECT_THROW(validate(box(5, 0, 4, 1)), InvalidArgument);
    EXPECT_THROW(validate(box(0, 0, 1, 1, 1.1)), InvalidArgument);
    EXPECT_THROW(validate(EnsembleConfig{0.7, 0.8, 0.95}), InvalidArgument);
    EXPECT_THROW(validate(EnsembleConfig{0.9, 0.8, 1.5}), InvalidArgument);
    EXPECT_NO_THROW(validate(box(0, 0, 0, 0, 0.0)));
}

TEST(Nms, EmptyAndSingle) {
    EXPECT_TRUE(nms({}, 0.5).empty());
    const std::vector<DetBox> one{box(1, 2, 3, 4, 0.3)};
    EXPECT_EQ(nms(one, 0.5), one);
}

TEST(Nms, IdenticalBoxesKeepTheLikelier) {
    const std::vector<DetBox> in{box(0, 0, 10, 10, 0.8), box(0, 0, 10, 10, 0.9)};
    const auto out = nms(in, 0.95);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].prob, 0.9);
}

TEST(Nms, IouEqualToThresholdSurvives) {
    const std::vector<DetBox> in{box(0, 0, 10, 10, 0.9), box(5, 0, 15, 10, 0.8)};
    EXPECT_EQ(nms(in, 1.0 / 3.0).size(), 2u);
    EXPECT_EQ(nms(in, 0.33).size(), 1u);
}

TEST(Nms, TiesOrderByModelThenInput) {
    const std::vector<DetBox> in{box(0, 0, 1, 1, 0.5, "b"), box(5, 5, 6, 6, 0.5, "a"), box(8, 8, 9, 9, 0.5, "a")};
    const auto out = nms(in, 0.5);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0], in[1]);
    EXPECT_EQ(out[1], in[2]);
    EXPECT_EQ(out[2], in[0]);
    const std::string pref = "b";
    EXPECT_EQ(nms(in, 0.5, &pref)[0], in[0]);
}

TEST(Nms, MatchesOracleOnRandomInstances) {
    gen::Rng rng(2);
    const double thresholds[] = {0.3, 0.5, 0.95};
    for (int trial = 0; trial < 1000; ++trial) {
        const auto in = gen::box_pool(rng, 20);
        const double t = thresholds[trial % 3];
        const auto out = nms(in, t);
        ASSERT_EQ(out, oracle::nms_trace(in, t)) << "trial " << trial;
    }
}

TEST(Nms, OutputIsAnOverlapAntichainAndSubset) {
    gen::Rng rng(3);
    for (int trial = 0; trial < 300; ++trial) {
        const auto in = gen::box_pool(rng, 20);
        const double t = rng.uniform(0.0, 1.0);
        const auto out = nms(in, t);
        for (std::size_t i = 0; i < out.size(); ++i) {
            EXPECT_NE(std::find(in.begin(), in.end(), out[i]), in.end());
            for (std::size_t j = i + 1; j < out.size(); ++j) {
                EXPECT_LE(iou(out[i], out[j]), t);
            }
            if (i > 0) {
                EXPECT_GE(out[i - 1].prob, out[i].prob);
            }
        }
        EXPECT_EQ(nms(in, t), out);
    }
}

TEST(Nms, RejectsThresholdOutsideUnitInterval) {
    EXPECT_THROW(nms({}, -0.1), InvalidArgument);
}

TEST(BestModel, HighestAccuracyThenSmallestId) {
    const std::vector<DetectorDescriptor> d{{"z", 0.8}, {"b", 0.9}, {"a", 0.9}};
    EXPECT_EQ(best_model(d), 2u);
    EXPECT_THROW(best_model({}), InvalidArgument);
}

TEST(SelectiveNms, AllBelowThresholdsIsEmpty) {
    const std::vector<DetectorDescriptor> d{{"m1", 0.9}, {"m2", 0.5}};
    const BoxesByModel in{{"m1", {box(0, 0, 5, 5, 0.85, "m1")}}, {"m2", {box(10, 10, 15, 15, 0.7, "m2")}}};
    EXPECT_TRUE(selective_nms(in, d, {}).empty());
}

TEST(SelectiveNms, BestModelHasPriority) {
    const std::vector<DetectorDescriptor> d{{"best", 0.9}, {"other", 0.5}};
    const BoxesByModel in{{"best", {box(0, 0, 10, 10, 0.91, "best")}}, {"other", {box(0, 0, 10, 10, 0.99, "other")}}};
    const auto out = selective_nms(in, d, {0.9, 0.8, 0.95});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].model_id, "best");
    EXPECT_EQ(out[0].prob, 1.0);
}

TEST(SelectiveNms, BoostedTiesFavourTheBestModel) {
    // An other-model box at prob 1.0 ties the boosted best-model box.
    const std::vector<DetectorDescriptor> d{{"z-best", 0.9}, {"a-other", 0.5}};
    const BoxesByModel in{{"z-best", {box(0, 0, 10, 10, 0.95, "z-best")}},
                          {"a-other", {box(0, 0, 10, 10, 1.0, "a-other")}}};
    const auto out = selective_nms(in, d, {});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].model_id, "z-best");
}

TEST(SelectiveNms, RejectsUnknownModel) {
    const std::vector<DetectorDescriptor> d{{"m1", 0.9}};
    const BoxesByModel in{{"ghost", {box(0, 0, 1, 1, 0.9, "ghost")}}};
    EXPECT_THROW(selective_nms(in, d, {}), InvalidArgument);
}

TEST(SelectiveNms, MatchesDirectTrace) {
    gen::Rng rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        const auto d = two_models(rng);
        BoxesByModel in;
        in["m1"] = gen::boxes(rng, rng.integer(0, 10), "m1");
        in["m2"] = gen::boxes(rng, rng.integer(0, 10), "m2");
        // Cross-model copies make boosted ties and full overlaps common.
        for (auto& b : in["m2"]) {
            if (!in["m1"].empty() && rng.chance(0.3)) {
                const auto& src = rng.pick(in["m1"]);
                b.x1 = src.x1;
                b.y1 = src.y1;
                b.x2 = src.x2;
                b.y2 = src.y2;
            }
        }
        const EnsembleConfig cfg{0.9, 0.8, 0.95};
        ASSERT_EQ(selective_nms(in, d, cfg), oracle::snms_trace(in, d, cfg)) << "trial " << trial;
    }
}

TEST(SelectiveNms, PriorityBoxesAreNeverSuppressedByOtherModels) {
    gen::Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const auto d = two_models(rng);
        const std::string q = d[best_model(d)].model_id;
        BoxesByModel in;
        in["m1"] = gen::boxes(rng, rng.integer(0, 10), "m1");
        in["m2"] = gen::boxes(rng, rng.integer(0, 10), "m2");
        const EnsembleConfig cfg{0.9, 0.8, rng.pick(std::vector<double>{0.3, 0.5, 0.95})};
        std::vector<oracle::Suppression> log;
        oracle::snms_trace(in, d, cfg, &log);
        for (const auto& s : log) {
            if (s.removed.model_id == q) {
                EXPECT_EQ(s.by.model_id, q);
            }
        }
        const auto out = selective_nms(in, d, cfg);
        for (const auto& b : in[q]) {
            if (b.prob < cfg.p_th) {
                continue;
            }
            DetBox boosted = b;
            boosted.prob = 1.0;
            const bool kept = std::find(out.begin(), out.end(), boosted) != out.end();
            const bool by_q = std::any_of(out.begin(), out.end(), [&](const DetBox& o) {
                return o.model_id == q && iou(o, boosted) > cfg.nms_threshold;
            });
            EXPECT_TRUE(kept || by_q);
        }
    }
}

TEST(ToImageCoords, TranslatesAndRoundTrips) {
    DetBox b = box(1, 2, 3, 4, 0.7, "m");
    b.frame = Frame::Segment;
    EXPECT_EQ(to_image_coords(b, 0, 0).x2, 3.0);
    const auto moved = to_image_coords(b, 10, 20);
    EXPECT_EQ(moved.x1, 11.0);
    EXPECT_EQ(moved.y1, 22.0);
    EXPECT_EQ(moved.x2, 13.0);
    EXPECT_EQ(moved.y2, 24.0);
    EXPECT_EQ(moved.frame, Frame::Image);
    EXPECT_EQ(moved.prob, 0.7);
    EXPECT_EQ(moved.model_id, "m");
    DetBox back = moved;
    back.x1 -= 10;
    back.x2 -= 10;
    back.y1 -= 20;
    back.y2 -= 20;
    back.frame = Frame::Segment;
    EXPECT_EQ(back, b);
}

TEST(ToImageCoords, ClipsAndCounts) {
    Diagnostics diag;
    const auto out = to_image_coords(box(-2, 5, 30, 12), 10, 10, 35, 20, diag);
    EXPECT_EQ(out.x1, 8.0);
    EXPECT_EQ(out.x2, 35.0);
    EXPECT_EQ(out.y2, 20.0);
    EXPECT_EQ(diag.clipped_boxes, 1);
    to_image_coords(box(0, 0, 1, 1), 0, 0, 35, 20, diag);
    EXPECT_EQ(diag.clipped_boxes, 1);
}
