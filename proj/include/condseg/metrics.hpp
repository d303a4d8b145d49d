#pragma once

// Evaluation: per-class IoU inside the ground-truth eye region, center
// location error, and per-method summaries (mean IoU, median error).

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "condseg/baseline.hpp"
#include "condseg/error.hpp"
#include "condseg/fitter.hpp"
#include "condseg/geometry.hpp"
#include "condseg/image.hpp"
#include "condseg/raster.hpp"
#include "condseg/synth.hpp"

namespace condseg {

/// |a & b & region| / |(a | b) & region|; 1 when both restricted masks are
/// empty.
inline double iou(const BinaryMask& a, const BinaryMask& b, const BinaryMask* region = nullptr) {
    require_same_shape(a, b);
    if (region) require_same_shape(a, *region);
    auto pa = a.pixels();
    auto pb = b.pixels();
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (region && !region->pixels()[i]) continue;
        inter += (pa[i] && pb[i]);
        uni += (pa[i] || pb[i]);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double iou(const BinaryMask& a, const BinaryMask& b, const BinaryMask& region) {
    return iou(a, b, &region);
}

inline double center_error(const Ellipse5D& pred, const Ellipse5D& gt) {
    return std::hypot(pred.x0 - gt.x0, pred.y0 - gt.y0);
}

/// Axis-angle difference folded into [0, pi/2].
inline double angle_error(const Ellipse5D& pred, const Ellipse5D& gt) {
    const double d = std::abs(std::fmod(canonicalize(pred).theta - canonicalize(gt).theta, kPi));
    return std::min(d, kPi - d);
}

/// Angles of near-circular ellipses carry no information.
inline bool angle_defined(const Ellipse5D& e, double min_rel_axis_gap = 0.05) {
    const Ellipse5D c = canonicalize(e);
    return (c.a - c.b) / c.a >= min_rel_axis_gap;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

struct SceneEval {
    std::size_t index = 0;
    bool valid = false;
    std::string error;
    double iou_pupil = 0, iou_iris_region = 0, iou_eye = 0;
    double iou_full_pupil = 0, iou_full_iris = 0;
    double err_loc_pupil = 0, err_loc_iris = 0;
    std::optional<double> err_angle_pupil, err_angle_iris;
};

struct EvalReport {
    std::string method = "condseg";
    std::size_t n_scenes = 0;
    std::size_t n_valid = 0;
    std::size_t n_failed = 0;
    double iou_pupil = 0, iou_iris_region = 0, iou_eye = 0;
    double iou_full_pupil = 0, iou_full_iris = 0;
    double err_loc_pupil_median = 0, err_loc_iris_median = 0;
    std::vector<SceneEval> scenes;
};

/// A fitted scene or the reason it could not be fitted.
struct FitOutcome {
    std::optional<SceneFit> fit;
    std::string error;
};

inline SceneEval evaluate_scene(const SceneGroundTruth& gt, const SceneFit& fit) {
    const int w = gt.eye.width();
    const int h = gt.eye.height();
    SceneEval r;
    r.valid = true;
    const BinaryMask fp = hard_mask(fit.pupil.ellipse, w, h);
    const BinaryMask fi = hard_mask(fit.iris.ellipse, w, h);
    r.iou_pupil = iou(mask_and(fp, gt.eye), gt.visible_pupil, gt.eye);
    r.iou_iris_region = iou(mask_and(fi, gt.eye), gt.visible_iris_region, gt.eye);
    // The eye region is an input here, so the assembled eye equals the condition.
    r.iou_eye = iou(gt.eye, gt.eye);
    r.iou_full_pupil = iou(fp, hard_mask(gt.pupil, w, h));
    r.iou_full_iris = iou(fi, hard_mask(gt.iris, w, h));
    r.err_loc_pupil = center_error(fit.pupil.ellipse, gt.pupil);
    r.err_loc_iris = center_error(fit.iris.ellipse, gt.iris);
    if (angle_defined(gt.pupil)) r.err_angle_pupil = angle_error(fit.pupil.ellipse, gt.pupil);
    if (angle_defined(gt.iris)) r.err_angle_iris = angle_error(fit.iris.ellipse, gt.iris);
    return r;
}

inline EvalReport summarize(std::string method, std::vector<SceneEval> scenes) {
    EvalReport rep;
    rep.method = std::move(method);
    rep.n_scenes = scenes.size();
    std::vector<double> ip, ii, ie, ifp, ifi, ep, ei;
    for (const auto& s : scenes) {
        if (!s.valid) {
            ++rep.n_failed;
            continue;
        }
        ++rep.n_valid;
        ip.push_back(s.iou_pupil);
        ii.push_back(s.iou_iris_region);
        ie.push_back(s.iou_eye);
        ifp.push_back(s.iou_full_pupil);
        ifi.push_back(s.iou_full_iris);
        ep.push_back(s.err_loc_pupil);
        ei.push_back(s.err_loc_iris);
    }
    rep.iou_pupil = mean(ip);
    rep.iou_iris_region = mean(ii);
    rep.iou_eye = mean(ie);
    rep.iou_full_pupil = mean(ifp);
    rep.iou_full_iris = mean(ifi);
    rep.err_loc_pupil_median = median(ep);
    rep.err_loc_iris_median = median(ei);
    rep.scenes = std::move(scenes);
    return rep;
}

inline EvalReport evaluate(const std::vector<SceneGroundTruth>& scenes,
                           const std::vector<FitOutcome>& fits, std::string method = "condseg") {
    if (scenes.size() != fits.size()) {
        throw Error(ErrorCode::LengthMismatch, "scene and fit lists differ in length");
    }
    std::vector<SceneEval> per;
    per.reserve(scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        SceneEval r;
        if (fits[i].fit) {
            r = evaluate_scene(scenes[i], *fits[i].fit);
        } else {
            r.error = fits[i].error.empty() ? "missing fit" : fits[i].error;
        }
        r.index = i;
        per.push_back(std::move(r));
    }
    return summarize(std::move(method), std::move(per));
}

/// Contour + RANSAC fit of both visible masks, packaged like a SceneFit.
inline SceneFit ransac_scene_fit(const SceneGroundTruth& scene, const RansacOptions& opt) {
    SceneFit f;
    f.iris.ellipse = ransac_ellipse_detailed(contour_points(scene.visible_iris_region), opt).ellipse;
    f.pupil.ellipse = ransac_ellipse_detailed(contour_points(scene.visible_pupil), opt).ellipse;
    f.roi = bounding_square(f.iris.ellipse);
    return f;
}

}  // namespace condseg
