#pragma once

// Synthetic ground-truth scenes. Iris and pupil are full ellipses; the eye
// region is the area between two parabolic eyelids whose height scales with
// the openness; visible masks are full masks intersected with the eye.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "condseg/error.hpp"
#include "condseg/geometry.hpp"
#include "condseg/image.hpp"
#include "condseg/raster.hpp"
#include "condseg/rng.hpp"

namespace condseg {

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    bool valid() const { return std::isfinite(lo) && std::isfinite(hi) && lo <= hi; }
    double draw(Rng& rng) const { return rng.uniform(lo, hi); }
};

struct SynthConfig {
    int width = 320;
    int height = 240;
    Range iris_radius{40.0, 60.0};     // semi-major axis, px
    Range pupil_ratio{0.2, 0.6};       // pupil semi-major / iris semi-minor
    Range eccentricity{0.75, 1.0};     // b / a
    Range theta{0.0, kPi};
    Range openness{0.1, 1.0};
    std::uint64_t seed = 0;

    /// When set, each scene's openness is solved so the iris occlusion
    /// fraction hits a target drawn uniformly from this range.
    std::optional<Range> occlusion_target;
    /// Scenes with a larger occlusion fraction are resampled.
    double occlusion_max = 1.0;
    int min_visible_pupil = 20;
    int max_attempts = 1000;

    void validate() const {
        auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
        if (width < 16 || height < 16) bad("frame must be at least 16x16");
        for (const Range* r : {&iris_radius, &pupil_ratio, &eccentricity, &theta, &openness}) {
            if (!r->valid()) bad("empty range in synth config");
        }
        if (!(iris_radius.lo > 0) || 2 * iris_radius.hi >= std::min(width, height)) {
            bad("iris radius range does not fit the frame");
        }
        if (!(pupil_ratio.lo > 0) || pupil_ratio.hi >= 0.95) bad("pupil ratio must be in (0, 0.95)");
        if (!(eccentricity.lo > 0) || eccentricity.hi > 1) bad("eccentricity must be in (0, 1]");
        if (openness.lo < 0) bad("openness must be >= 0");
        if (occlusion_target &&
            (!occlusion_target->valid() || occlusion_target->lo < 0 || occlusion_target->hi > 1)) {
            bad("occlusion target must lie in [0, 1]");
        }
        if (max_attempts < 1) bad("max_attempts must be >= 1");
    }
};

/// Eyelid geometry: corners at (cx -/+ half_width, cy); the upper lid is
/// y = cy - openness * lid_scale * (1 - t^2), the lower one mirrored, with
/// t = (x - cx) / half_width.
struct EyelidModel {
    double cx = 0.0;
    double cy = 0.0;
    double half_width = 1.0;
    double lid_scale = 1.0;

    BinaryMask mask(int w, int h, double openness) const {
        BinaryMask m(w, h);
        for (int x = 0; x < w; ++x) {
            const double t = (x - cx) / half_width;
            if (std::abs(t) >= 1) continue;
            const double reach = openness * lid_scale * (1 - t * t);
            for (int y = 0; y < h; ++y) {
                if (std::abs(y - cy) < reach) m.at(x, y) = 1;
            }
        }
        return m;
    }
};

struct SceneGroundTruth {
    Ellipse5D iris;
    Ellipse5D pupil;
    BinaryMask eye;
    BinaryMask visible_pupil;
    BinaryMask visible_iris_region;
    double occlusion_fraction = 0.0;
    double openness = 1.0;
};

inline double occlusion_fraction(const BinaryMask& full, const BinaryMask& visible) {
    const std::size_t n = count_positive(full);
    if (n == 0) return 0.0;
    return 1.0 - static_cast<double>(count_positive(visible)) / static_cast<double>(n);
}

/// Assemble a scene from ellipses and an eye mask; visible = full AND eye.
inline SceneGroundTruth make_scene(const Ellipse5D& iris, const Ellipse5D& pupil, BinaryMask eye) {
    SceneGroundTruth s;
    s.iris = canonicalize(iris);
    s.pupil = canonicalize(pupil);
    const BinaryMask full_iris = hard_mask(iris, eye.width(), eye.height());
    const BinaryMask full_pupil = hard_mask(pupil, eye.width(), eye.height());
    s.visible_iris_region = mask_and(full_iris, eye);
    s.visible_pupil = mask_and(full_pupil, eye);
    s.occlusion_fraction = occlusion_fraction(full_iris, s.visible_iris_region);
    s.eye = std::move(eye);
    return s;
}

namespace detail {

// Pupil strictly inside the iris: every sampled pupil boundary point sits
// at iris conic value below -margin.
inline bool pupil_inside(const Ellipse5D& iris, const Ellipse5D& pupil) {
    const ConicMatrix m = to_conic(iris);
    for (const Point2& p : boundary_points(pupil, 256)) {
        if (eval_conic(m, p.x, p.y) > -0.02) return false;
    }
    return true;
}

}  // namespace detail

inline SceneGroundTruth generate_scene(const SynthConfig& cfg, std::uint64_t index) {
    cfg.validate();
    const int w = cfg.width;
    const int h = cfg.height;
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        Rng rng = Rng::stream(cfg.seed, index * 1000003ULL + static_cast<std::uint64_t>(attempt));

        Ellipse5D iris;
        iris.a = cfg.iris_radius.draw(rng);
        iris.b = iris.a * cfg.eccentricity.draw(rng);
        iris.theta = cfg.theta.draw(rng);
        iris.x0 = rng.uniform(0.35, 0.65) * w;
        iris.y0 = rng.uniform(0.38, 0.62) * h;

        Ellipse5D pupil;
        pupil.a = cfg.pupil_ratio.draw(rng) * iris.b;
        pupil.b = pupil.a * cfg.eccentricity.draw(rng);
        pupil.theta = cfg.theta.draw(rng);
        const double jr = 0.1 * iris.b * std::sqrt(rng.uniform());
        const double ja = rng.uniform(0, 2 * kPi);
        pupil.x0 = iris.x0 + jr * std::cos(ja);
        pupil.y0 = iris.y0 + jr * std::sin(ja);
        if (!detail::pupil_inside(iris, pupil)) continue;

        EyelidModel lids;
        lids.cx = w * rng.uniform(0.47, 0.53);
        lids.cy = h * rng.uniform(0.47, 0.53);
        lids.half_width = 0.6 * w;
        lids.lid_scale = h;

        const BinaryMask full_iris = hard_mask(iris, w, h);
        const BinaryMask full_pupil = hard_mask(pupil, w, h);
        if (!is_subset(full_pupil, full_iris)) continue;

        double openness = cfg.openness.draw(rng);
        if (cfg.occlusion_target) {
            const double target = cfg.occlusion_target->draw(rng);
            auto occ_at = [&](double o) {
                return occlusion_fraction(full_iris, mask_and(full_iris, lids.mask(w, h, o)));
            };
            // occlusion is non-increasing in openness
            double lo = 0.0, hi = 1.0;
            if (occ_at(hi) > target) continue;
            for (int it = 0; it < 40; ++it) {
                const double mid = 0.5 * (lo + hi);
                (occ_at(mid) > target ? lo : hi) = mid;
            }
            openness = hi;
            const double got = occ_at(openness);
            if (got < cfg.occlusion_target->lo || got > cfg.occlusion_target->hi) continue;
        }

        SceneGroundTruth s = make_scene(iris, pupil, lids.mask(w, h, openness));
        s.openness = openness;
        if (static_cast<int>(count_positive(s.visible_pupil)) < cfg.min_visible_pupil) continue;
        if (s.occlusion_fraction > cfg.occlusion_max) continue;
        return s;
    }
    throw Error(ErrorCode::RejectionBudgetExceeded,
                "no valid scene after " + std::to_string(cfg.max_attempts) + " attempts");
}

namespace detail {

inline BinaryMask perturb_boundary(const BinaryMask& m, const BinaryMask& eye, double noise,
                                   Rng& rng) {
    BinaryMask out = m;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            const std::uint8_t v = m.at(x, y);
            bool edge = false;
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (m.contains(nx[k], ny[k]) && m.at(nx[k], ny[k]) != v) edge = true;
            }
            // one draw per pixel keeps the stream independent of the mask
            const bool flip = rng.bernoulli(noise);
            if (edge && flip && eye.at(x, y)) out.at(x, y) = v ? 0 : 1;
        }
    }
    return out;
}

}  // namespace detail

/// Flip boundary-adjacent visible pixels (inside the eye) with probability
/// `noise`. Ground-truth ellipses and the eye mask are unchanged.
inline SceneGroundTruth perturb_masks(const SceneGroundTruth& scene, double noise,
                                      std::uint64_t seed) {
    if (!(noise >= 0 && noise <= 0.5)) {
        throw Error(ErrorCode::InvalidArgument, "noise must be in [0, 0.5]");
    }
    SceneGroundTruth out = scene;
    if (noise == 0) return out;
    Rng rng_p = Rng::stream(seed, 1);
    Rng rng_i = Rng::stream(seed, 2);
    out.visible_pupil = detail::perturb_boundary(scene.visible_pupil, scene.eye, noise, rng_p);
    out.visible_iris_region =
        detail::perturb_boundary(scene.visible_iris_region, scene.eye, noise, rng_i);
    return out;
}

}  // namespace condseg
