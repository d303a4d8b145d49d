#include <gtest/gtest.h>

#include <cmath>

#include "condseg/gradcheck.hpp"
#include "condseg/objective.hpp"
#include "condseg/raster.hpp"
#include "condseg/resample.hpp"

using namespace condseg;

namespace {

struct Disk {
    Frame frame = Frame::image(80, 60, 0.01);
    BinaryMask eye{80, 60, 1};
    BinaryMask gt = hard_mask({40, 30, 12, 12, 0}, 80, 60);
};

}  // namespace

TEST(ConditionedBce, PerfectPredictionHitsClamp) {
    BinaryMask eye(10, 10, 1);
    BinaryMask gt(10, 10);
    for (int x = 0; x < 5; ++x) gt.at(x, 3) = 1;
    SoftMask pred(10, 10);
    for (std::size_t i = 0; i < pred.size(); ++i) pred.pixels()[i] = gt.pixels()[i];
    EXPECT_NEAR(conditioned_bce(pred, eye, gt, 1e-7), -std::log(1 - 1e-7), 1e-15);
}

TEST(ConditionedBce, HalfIsLn2) {
    BinaryMask eye(6, 6, 1);
    BinaryMask gt(6, 6);
    gt.at(2, 2) = 1;
    EXPECT_NEAR(conditioned_bce(SoftMask(6, 6, 0.5), eye, gt), std::log(2.0), 1e-15);
}

TEST(ConditionedBce, EmptyCondition) {
    try {
        conditioned_bce(SoftMask(4, 4, 0.5), BinaryMask(4, 4), BinaryMask(4, 4));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyCondition);
    }
}

TEST(ConditionedBce, IgnoresPixelsOutsideEye) {
    BinaryMask eye(4, 1);
    eye.at(0, 0) = 1;
    BinaryMask gt(4, 1);
    SoftMask pred(4, 1, 0.999);
    pred.at(0, 0) = 0.5;
    EXPECT_NEAR(conditioned_bce(pred, eye, gt), std::log(2.0), 1e-15);
}

TEST(ConditionedBce, ShapeMismatch) {
    EXPECT_THROW(conditioned_bce(SoftMask(4, 4), BinaryMask(4, 5, 1), BinaryMask(4, 4)), Error);
}

TEST(ConditionedBce, SoftLabels) {
    BinaryMask eye(2, 1, 1);
    SoftMask pred(2, 1);
    pred.at(0, 0) = 0.8;
    pred.at(1, 0) = 0.5;
    SoftMask labels(2, 1);
    labels.at(0, 0) = 0.3;
    labels.at(1, 0) = 0.25;
    const double want = (-0.3 * std::log(0.8) - 0.7 * std::log(0.2) + std::log(2.0)) / 2;
    EXPECT_NEAR(conditioned_bce(pred, eye, labels), want, 1e-15);
}

TEST(ConditionedTarget, HardSoftLabelsMatchBinary) {
    Disk d;
    SoftMask soft(80, 60);
    for (int y = 0; y < 60; ++y)
        for (int x = 0; x < 80; ++x) soft.at(x, y) = d.gt.at(x, y);
    const NormalizedEllipse p = d.frame.from_absolute({43, 28, 14, 10, 0.6});
    const ObjectiveOptions opt;
    const LossGrad a = ConditionedTarget(d.frame, d.eye, d.gt).evaluate(p, opt);
    const LossGrad b = ConditionedTarget(d.frame, d.eye, soft).evaluate(p, opt);
    EXPECT_DOUBLE_EQ(a.loss, b.loss);
    for (int k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(a.grad[k], b.grad[k]);
}

TEST(ConditionedTarget, SoftLabelsMatchFiniteDifferences) {
    const BoundingSquare sq{20.3, 10.7, 40};
    const Frame f = Frame::region(sq, 50, 0.1);
    BinaryMask eye(50, 50, 1);
    for (int x = 0; x < 50; ++x) eye.at(x, 0) = 0;
    const SoftMask labels = crop_bilinear(hard_mask({41, 30, 9, 7, 1.0}, 80, 60), sq, 50);
    const NormalizedEllipse p = f.from_absolute({40, 29, 10, 6.5, 0.8});
    const ObjectiveOptions opt;
    const LossGrad lg = ConditionedTarget(f, eye, labels).evaluate(p, opt);
    EXPECT_NEAR(lg.loss, reference_loss(p, f, eye, labels, opt, reference_normalizer(p, f, opt)), 1e-12);
    const auto n = central_difference(p, f, eye, labels, opt);
    for (int k = 0; k < 5; ++k) EXPECT_LE(relative_error(lg.grad[k], n[k], 1e-8), 1e-4) << k;
}

TEST(LossAndGrad, MatchesReferenceLoss) {
    Disk d;
    const NormalizedEllipse p = d.frame.from_absolute({43, 28, 14, 10, 0.6});
    const ObjectiveOptions opt;
    const LossGrad lg = loss_and_grad(p, d.frame, d.eye, d.gt, opt);
    const double ref = reference_loss(p, d.frame, d.eye, d.gt, opt, reference_normalizer(p, d.frame, opt));
    EXPECT_NEAR(lg.loss, ref, 1e-12);
}

TEST(LossAndGrad, MatchesFiniteDifferences) {
    Disk d;
    const ObjectiveOptions opt;
    for (const Ellipse5D e : {Ellipse5D{43, 28, 14, 10, 0.6}, Ellipse5D{37, 33, 9, 13, 2.1}}) {
        const NormalizedEllipse p = d.frame.from_absolute(e);
        const auto g = loss_and_grad(p, d.frame, d.eye, d.gt, opt).grad;
        const auto n = central_difference(p, d.frame, d.eye, d.gt, opt);
        for (int k = 0; k < 5; ++k) EXPECT_LE(relative_error(g[k], n[k], 1e-8), 1e-4) << k;
    }
}

TEST(LossAndGrad, RegionFrameMatchesFiniteDifferences) {
    const BoundingSquare sq{20, 10, 40};
    const Frame f = Frame::region(sq, 50, 0.1);
    BinaryMask eye(50, 50, 1);
    for (int x = 0; x < 50; ++x)
        for (int y = 0; y < 12; ++y) eye.at(x, y) = 0;
    const BinaryMask gt = mask_and(hard_mask({25, 25, 10, 10, 0}, 50, 50), eye);
    const NormalizedEllipse p = f.from_absolute({41, 29, 9, 7, 1.0});
    const ObjectiveOptions opt;
    const auto g = loss_and_grad(p, f, eye, gt, opt).grad;
    const auto n = central_difference(p, f, eye, gt, opt);
    for (int k = 0; k < 5; ++k) EXPECT_LE(relative_error(g[k], n[k], 1e-8), 1e-4) << k;
}

TEST(LossAndGrad, SymmetricOffsetsGiveOpposedXGradient) {
    // odd size: the grid, and so the corner normalizer, is mirror-symmetric about x = 40
    const Frame f = Frame::image(81, 61, 0.01);
    const BinaryMask eye(81, 61, 1);
    const BinaryMask gt = hard_mask({40, 30, 12.3, 12.3, 0}, 81, 61);
    const ObjectiveOptions opt;
    const auto right = loss_and_grad(f.from_absolute({43, 30, 12.3, 12.3, 0}), f, eye, gt, opt);
    const auto left = loss_and_grad(f.from_absolute({37, 30, 12.3, 12.3, 0}), f, eye, gt, opt);
    EXPECT_GT(right.grad[0], 0);
    EXPECT_NEAR(right.grad[0], -left.grad[0], 1e-9 * std::abs(right.grad[0]));
    EXPECT_NEAR(right.loss, left.loss, 1e-12);
}

TEST(LossAndGrad, SmallerGradientAtTruth) {
    Disk d;
    const ObjectiveOptions opt;
    auto norm = [](const std::array<double, 5>& g) {
        double s = 0;
        for (double v : g) s += v * v;
        return std::sqrt(s);
    };
    const BinaryMask gt = hard_mask({40, 30, 12, 12, 0}, 80, 60);
    const auto at = loss_and_grad(d.frame.from_absolute({40, 30, 12, 12, 0}), d.frame, d.eye, gt, opt);
    const auto off = loss_and_grad(d.frame.from_absolute({45, 30, 12, 12, 0}), d.frame, d.eye, gt, opt);
    EXPECT_LE(norm(at.grad), norm(off.grad));
    EXPECT_LT(at.loss, off.loss);
}

TEST(LossAndGrad, FlipInvariance) {
    const int w = 80, h = 60;
    Frame f = Frame::image(w, h, 0.01);
    BinaryMask eye(w, h);
    for (int y = 15; y < 50; ++y)
        for (int x = 5; x < 70; ++x) eye.at(x, y) = 1;
    const BinaryMask gt = mask_and(hard_mask({30, 30, 15, 11, 0.5}, w, h), eye);
    BinaryMask eye_f(w, h), gt_f(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            eye_f.at(w - 1 - x, y) = eye.at(x, y);
            gt_f.at(w - 1 - x, y) = gt.at(x, y);
        }
    const Ellipse5D e{33, 28, 14, 10, 0.7};
    const Ellipse5D ef{w - 1 - e.x0, e.y0, e.a, e.b, kPi - e.theta};
    const ObjectiveOptions opt;
    const double l = loss_and_grad(f.from_absolute(e), f, eye, gt, opt).loss;
    const double lf = loss_and_grad(f.from_absolute(ef), f, eye_f, gt_f, opt).loss;
    EXPECT_NEAR(l, lf, 1e-9);
}

TEST(GtOutsideCondition, CountsStrayPixels) {
    BinaryMask eye(3, 3);
    eye.at(1, 1) = 1;
    BinaryMask gt(3, 3, 1);
    EXPECT_EQ(gt_outside_condition(gt, eye), 8u);
}

TEST(GradCheck, HarnessPassesAndDetectsSignFlip) {
    GradCheckOptions o;
    o.trials = 2;
    o.seed = 5;
    EXPECT_TRUE(run_gradcheck(o).passed);
    o.flip_sign = 2;
    const auto bad = run_gradcheck(o);
    EXPECT_FALSE(bad.passed);
    EXPECT_GT(bad.max_rel_error[2], 1.0);
}
