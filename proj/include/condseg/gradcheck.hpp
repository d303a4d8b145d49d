#pragma once

// Finite-difference check of the analytic objective gradient. The reference
// loss is recomputed from scratch (distmap -> segmap -> conditioned BCE),
// sharing nothing with the analytic pass but the ellipse algebra. The
// segmap normalizer is frozen at the base point on both sides.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "condseg/fitter.hpp"
#include "condseg/objective.hpp"
#include "condseg/raster.hpp"
#include "condseg/rng.hpp"
#include "condseg/synth.hpp"

namespace condseg {

/// `Labels` is a BinaryMask or a SoftMask.
template <class Labels>
double reference_loss(const NormalizedEllipse& params, const Frame& frame, const BinaryMask& eye,
                      const Labels& gt, const ObjectiveOptions& opt, double normalizer) {
    const ScalarField d = distmap(frame.to_raster(params), frame.width, frame.height);
    return conditioned_bce(segmap_with_normalizer(d, opt.tau, normalizer), eye, gt, opt.p_min);
}

inline double reference_normalizer(const NormalizedEllipse& params, const Frame& frame,
                                   const ObjectiveOptions& opt) {
    return field_max(distmap(frame.to_raster(params), frame.width, frame.height)) + opt.delta;
}

namespace detail {

// Conditioned BCE with the probability clamp frozen per pixel: pixels whose
// base probability lies inside (p_min, 1 - p_min) use the unclamped log,
// the rest contribute nothing. Its derivative is the loss derivative at
// every point where the loss is differentiable.
template <class Labels>
double frozen_clamp_loss(const SoftMask& pred, const BinaryMask& eye, const Labels& gt,
                         const BinaryMask& active) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < pred.height(); ++y) {
        for (int x = 0; x < pred.width(); ++x) {
            if (!eye.at(x, y)) continue;
            ++n;
            if (!active.at(x, y)) continue;
            const double label = static_cast<double>(gt.at(x, y));
            const double p = pred.at(x, y);
            sum -= label * std::log(p) + (1 - label) * std::log1p(-p);
        }
    }
    return sum / static_cast<double>(n);
}

}  // namespace detail

/// Central differences with step `h` in normalized space. The normalizer and
/// the clamp pattern are held at their values for `params`.
template <class Labels>
std::array<double, 5> central_difference(const NormalizedEllipse& params, const Frame& frame,
                                         const BinaryMask& eye, const Labels& gt,
                                         const ObjectiveOptions& opt, double h = 1e-5) {
    const double norm = reference_normalizer(params, frame, opt);
    auto pred = [&](const std::array<double, 5>& q) {
        const ScalarField d = distmap(frame.to_raster(NormalizedEllipse::from_array(q)), frame.width,
                                      frame.height);
        return segmap_with_normalizer(d, opt.tau, norm);
    };
    const auto base = params.as_array();
    const SoftMask s0 = pred(base);
    BinaryMask active(frame.width, frame.height);
    for (int y = 0; y < frame.height; ++y) {
        for (int x = 0; x < frame.width; ++x) {
            const double p = s0.at(x, y);
            active.at(x, y) = p > opt.p_min && p < 1 - opt.p_min;
        }
    }
    std::array<double, 5> g{};
    for (int k = 0; k < 5; ++k) {
        auto up = base;
        auto dn = base;
        up[k] += h;
        dn[k] -= h;
        const double lu = detail::frozen_clamp_loss(pred(up), eye, gt, active);
        const double ld = detail::frozen_clamp_loss(pred(dn), eye, gt, active);
        g[k] = (lu - ld) / (2 * h);
    }
    return g;
}

inline double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckOptions {
    int trials = 50;
    std::uint64_t seed = 0;
    double step = 1e-5;
    double tolerance = 1e-4;
    double abs_floor = 1e-8;
    int width = 320;
    int height = 240;
    int roi_size = 200;
    double tau = kDefaultTau;
    /// Test hook: negate one analytic partial (0..4) before comparing.
    std::optional<int> flip_sign;
};

struct GradCheckCase {
    bool region_frame = false;
    std::array<double, 5> analytic{};
    std::array<double, 5> numeric{};
    std::array<double, 5> rel_error{};
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;
    std::array<double, 5> max_rel_error{};
    double tolerance = 0;
    bool passed = true;
};

/// A perturbed-ground-truth configuration on a synthetic scene: the image
/// frame around the iris, or the iris RoI around the pupil.
struct GradCheckConfig {
    Frame frame;
    BinaryMask eye;
    SoftMask labels;
    NormalizedEllipse params;
};

inline GradCheckConfig make_gradcheck_config(const GradCheckOptions& o, int trial, bool region) {
    SynthConfig sc;
    sc.width = o.width;
    sc.height = o.height;
    sc.seed = o.seed;
    sc.occlusion_target = Range{0.0, 0.4};
    const SceneGroundTruth s = generate_scene(sc, static_cast<std::uint64_t>(trial));
    Rng rng = Rng::stream(o.seed ^ 0x6772616463686bULL, static_cast<std::uint64_t>(2 * trial + region));

    auto perturb = [&](Ellipse5D e, double shift) {
        e.x0 += rng.uniform(-shift, shift);
        e.y0 += rng.uniform(-shift, shift);
        e.a *= rng.uniform(0.93, 1.07);
        e.b *= rng.uniform(0.93, 1.07);
        e.theta = std::clamp(e.theta + rng.uniform(-0.2, 0.2), 0.05, kPi - 0.05);
        return e;
    };

    GradCheckConfig c;
    if (!region) {
        c.frame = Frame::image(o.width, o.height, 0.01);
        c.eye = s.eye;
        c.labels = SoftMask(o.width, o.height);
        for (int y = 0; y < o.height; ++y) {
            for (int x = 0; x < o.width; ++x) c.labels.at(x, y) = s.visible_iris_region.at(x, y);
        }
        c.params = c.frame.from_absolute(perturb(s.iris, 4.0));
    } else {
        const RoiInputs in = crop_roi(s.visible_pupil, s.eye, s.iris, o.roi_size);
        c.frame = Frame::region(in.square, o.roi_size, 0.1);
        c.eye = in.eye;
        c.labels = in.visible_soft;
        Ellipse5D p = perturb(s.pupil, 2.0);
        c.params = c.frame.from_absolute(p);
    }
    return c;
}

inline GradCheckReport run_gradcheck(const GradCheckOptions& o) {
    GradCheckReport rep;
    rep.tolerance = o.tolerance;
    ObjectiveOptions opt;
    opt.tau = o.tau;
    for (int t = 0; t < o.trials; ++t) {
        for (bool region : {false, true}) {
            const GradCheckConfig c = make_gradcheck_config(o, t, region);
            GradCheckCase cs;
            cs.region_frame = region;
            cs.analytic = ConditionedTarget(c.frame, c.eye, c.labels).evaluate(c.params, opt).grad;
            if (o.flip_sign) cs.analytic[static_cast<std::size_t>(*o.flip_sign)] *= -1;
            cs.numeric = central_difference(c.params, c.frame, c.eye, c.labels, opt, o.step);
            for (int k = 0; k < 5; ++k) {
                cs.rel_error[k] = relative_error(cs.analytic[k], cs.numeric[k], o.abs_floor);
                rep.max_rel_error[k] = std::max(rep.max_rel_error[k], cs.rel_error[k]);
                if (!(cs.rel_error[k] <= o.tolerance)) rep.passed = false;
            }
            rep.cases.push_back(cs);
        }
    }
    return rep;
}

}  // namespace condseg
