#include <gtest/gtest.h>

#include <cmath>

#include "condseg/metrics.hpp"

using namespace condseg;

TEST(Iou, IdenticalAndDisjoint) {
    BinaryMask a(4, 4), b(4, 4);
    a.at(0, 0) = 1;
    a.at(1, 0) = 1;
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    b.at(3, 3) = 1;
    EXPECT_DOUBLE_EQ(iou(a, b), 0.0);
}

TEST(Iou, HalfBlock) {
    BinaryMask a(2, 2), b(2, 2, 1);
    a.at(0, 0) = 1;
    a.at(0, 1) = 1;
    EXPECT_DOUBLE_EQ(iou(a, b), 0.5);
}

TEST(Iou, RestrictedToRegion) {
    BinaryMask a(3, 1), b(3, 1), region(3, 1);
    a.at(0, 0) = 1;
    b.at(0, 0) = 1;
    a.at(2, 0) = 1;
    region.at(0, 0) = 1;
    EXPECT_DOUBLE_EQ(iou(a, b), 0.5);
    EXPECT_DOUBLE_EQ(iou(a, b, region), 1.0);
}

TEST(Iou, BothEmptyIsOne) { EXPECT_DOUBLE_EQ(iou(BinaryMask(3, 3), BinaryMask(3, 3)), 1.0); }

TEST(Iou, ShapeMismatch) {
    try {
        iou(BinaryMask(3, 3), BinaryMask(3, 4));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
}

TEST(CenterError, Euclidean) {
    EXPECT_DOUBLE_EQ(center_error({3, 4, 1, 1, 0}, {0, 0, 2, 2, 0}), 5.0);
}

TEST(AngleError, FoldsModPi) {
    EXPECT_NEAR(angle_error({0, 0, 3, 1, 0.05}, {0, 0, 3, 1, kPi - 0.05}), 0.1, 1e-12);
    EXPECT_NEAR(angle_error({0, 0, 3, 1, 0}, {0, 0, 3, 1, kPi / 2}), kPi / 2, 1e-12);
    EXPECT_FALSE(angle_defined({0, 0, 10, 9.9, 0}));
    EXPECT_TRUE(angle_defined({0, 0, 10, 8, 0}));
}

TEST(Median, OddEvenEmpty) {
    EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2);
    EXPECT_DOUBLE_EQ(median({4, 1, 2, 3}), 2.5);
    EXPECT_TRUE(std::isnan(median({})));
}

TEST(Evaluate, PerfectFitScoresOne) {
    SynthConfig cfg;
    cfg.seed = 4;
    const auto s = generate_scene(cfg, 0);
    SceneFit f;
    f.iris.ellipse = s.iris;
    f.pupil.ellipse = s.pupil;
    const EvalReport r = evaluate({s}, {FitOutcome{f, ""}});
    EXPECT_EQ(r.n_valid, 1u);
    EXPECT_DOUBLE_EQ(r.iou_pupil, 1.0);
    EXPECT_DOUBLE_EQ(r.iou_iris_region, 1.0);
    EXPECT_DOUBLE_EQ(r.iou_full_pupil, 1.0);
    EXPECT_DOUBLE_EQ(r.err_loc_pupil_median, 0.0);
}

TEST(Evaluate, FailedScenesExcludedFromMedians) {
    SynthConfig cfg;
    const auto s0 = generate_scene(cfg, 0);
    const auto s1 = generate_scene(cfg, 1);
    SceneFit f;
    f.iris.ellipse = s0.iris;
    f.pupil.ellipse = s0.pupil;
    f.pupil.ellipse.x0 += 2;
    const EvalReport r = evaluate({s0, s1}, {FitOutcome{f, ""}, FitOutcome{std::nullopt, "TooFewPixels"}});
    EXPECT_EQ(r.n_valid, 1u);
    EXPECT_EQ(r.n_failed, 1u);
    EXPECT_NEAR(r.err_loc_pupil_median, 2.0, 1e-12);
    EXPECT_EQ(r.scenes[1].error, "TooFewPixels");
}

TEST(Evaluate, LengthMismatch) {
    SynthConfig cfg;
    EXPECT_THROW(evaluate({generate_scene(cfg, 0)}, {}), Error);
}

TEST(RansacSceneFit, UnoccludedCenters) {
    SynthConfig cfg;
    cfg.seed = 8;
    cfg.occlusion_max = 0.0;
    const auto s = generate_scene(cfg, 0);
    const SceneFit f = ransac_scene_fit(s, RansacOptions{});
    EXPECT_LE(center_error(f.iris.ellipse, s.iris), 0.5);
    EXPECT_LE(center_error(f.pupil.ellipse, s.pupil), 0.5);
}
