#pragma once

// Direct recovery of full iris / pupil ellipses from visible-only masks:
// moment initialization, Adam descent on sigmoid logits of the normalized
// parameters, best-of-restarts, and the iris bounding-square RoI for the
// pupil stage.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "condseg/error.hpp"
#include "condseg/geometry.hpp"
#include "condseg/image.hpp"
#include "condseg/objective.hpp"
#include "condseg/raster.hpp"
#include "condseg/resample.hpp"
#include "condseg/rng.hpp"

namespace condseg {

struct FitConfig {
    double tau = kDefaultTau;
    double delta = kDefaultDelta;
    double eps_iris = 0.01;
    double eps_pupil = 0.1;
    int roi_size = 200;
    int max_iters = 400;
    double lr = 0.05;
    int restarts = 4;
    double tol_rel_loss = 1e-6;
    std::uint64_t seed = 0;

    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int window = 20;
    double inflate_iris = 1.2;
    double inflate_pupil = 1.0;
    double jitter_center = 0.05;  // fraction of the frame
    double jitter_axes = 0.2;     // relative
    int polish_iters = 50;        // Levenberg-Marquardt steps after Adam, 0 to skip
    bool use_roi = true;

    void validate() const {
        auto bad = [](const char* what) { throw Error(ErrorCode::InvalidArgument, what); };
        if (!(tau > 0)) bad("tau must be positive");
        if (!(delta > 0)) bad("delta must be positive");
        if (roi_size < 8) bad("roi_size must be >= 8");
        if (max_iters < 1) bad("max_iters must be >= 1");
        if (restarts < 1) bad("restarts must be >= 1");
        if (!(eps_iris > 0 && eps_iris < 1)) bad("eps_iris must be in (0,1)");
        if (!(eps_pupil > 0 && eps_pupil < 1)) bad("eps_pupil must be in (0,1)");
        if (!(lr > 0)) bad("lr must be positive");
        if (window < 1) bad("window must be >= 1");
        if (polish_iters < 0) bad("polish_iters must be >= 0");
    }

    ObjectiveOptions objective() const { return {tau, delta, kProbabilityFloor}; }
};

struct FitResult {
    Ellipse5D ellipse;
    double final_loss = 0.0;
    int iters_used = 0;
    int restart_index = 0;
    bool converged = false;
};

struct SceneFit {
    FitResult iris;
    FitResult pupil;
    BoundingSquare roi;
    bool roi_clipped = false;
};

/// Moment ellipse of the visible pixels: centroid, and axes 2*sqrt(eigenvalue)
/// of the pixel covariance scaled by `inflate` (floored at 1 px).
inline Ellipse5D init_from_visible(const BinaryMask& visible, const BinaryMask& eye,
                                   double inflate) {
    require_same_shape(visible, eye);
    double n = 0, sx = 0, sy = 0;
    for (int y = 0; y < visible.height(); ++y) {
        for (int x = 0; x < visible.width(); ++x) {
            if (!visible.at(x, y)) continue;
            n += 1;
            sx += x;
            sy += y;
        }
    }
    if (n < 5) throw Error(ErrorCode::TooFewPixels, "visible mask has fewer than 5 pixels");
    const double cx = sx / n;
    const double cy = sy / n;
    double cxx = 0, cxy = 0, cyy = 0;
    for (int y = 0; y < visible.height(); ++y) {
        for (int x = 0; x < visible.width(); ++x) {
            if (!visible.at(x, y)) continue;
            const double dx = x - cx;
            const double dy = y - cy;
            cxx += dx * dx;
            cxy += dx * dy;
            cyy += dy * dy;
        }
    }
    cxx /= n;
    cxy /= n;
    cyy /= n;
    const double mean = (cxx + cyy) / 2;
    const double rad = std::hypot((cxx - cyy) / 2, cxy);
    const double l1 = std::max(mean + rad, 0.0);
    const double l2 = std::max(mean - rad, 0.0);
    Ellipse5D e;
    e.x0 = cx;
    e.y0 = cy;
    e.a = std::max(2.0 * std::sqrt(l1) * inflate, 1.0);
    e.b = std::max(2.0 * std::sqrt(l2) * inflate, 1.0);
    e.theta = 0.5 * std::atan2(2 * cxy, cxx - cyy);
    return canonicalize(e);
}

namespace detail {

inline constexpr double kStartMargin = 1e-3;

inline double logit(double p) { return std::log(p / (1 - p)); }

// Normalized start for an absolute ellipse. The axes are labelled so that
// theta lands in [pi/4, 3pi/4): the bounded angle parameter then has room to
// rotate a quarter turn either way.
inline NormalizedEllipse start_params(const Frame& frame, Ellipse5D e) {
    e = canonicalize(e);
    if (e.theta < kPi / 4 || e.theta >= 3 * kPi / 4) {
        std::swap(e.a, e.b);
        e.theta = std::fmod(e.theta + kPi / 2, kPi);
    }
    auto v = frame.from_absolute(e).as_array();
    for (double& c : v) c = std::clamp(c, kStartMargin, 1 - kStartMargin);
    return NormalizedEllipse::from_array(v);
}

inline Ellipse5D jitter(const Ellipse5D& e, const Frame& frame, const FitConfig& cfg, Rng& rng) {
    Ellipse5D j = e;
    const double span_x = frame.roi ? frame.roi->s : frame.width;
    const double span_y = frame.roi ? frame.roi->s : frame.height;
    j.x0 += rng.uniform(-1, 1) * cfg.jitter_center * span_x;
    j.y0 += rng.uniform(-1, 1) * cfg.jitter_center * span_y;
    j.a *= 1 + rng.uniform(-1, 1) * cfg.jitter_axes;
    j.b *= 1 + rng.uniform(-1, 1) * cfg.jitter_axes;
    return j;
}

/// Levenberg-Marquardt on the normalized parameters, using the Gauss-Newton
/// curvature of the logits. Each step must lower the loss evaluated with the
/// normalizer frozen at the current point, so the iteration settles where
/// the (frozen-normalizer) gradient vanishes.
inline NormalizedEllipse polish(const ConditionedTarget& target, NormalizedEllipse p,
                                const FitConfig& cfg) {
    const ObjectiveOptions opt = cfg.objective();
    double lambda = 1e-3;
    for (int it = 0; it < cfg.polish_iters; ++it) {
        const auto cur = target.curvature(p, opt);
        Eigen::Matrix<double, 5, 5> h;
        Eigen::Matrix<double, 5, 1> g;
        double diag_max = 0;
        for (int k = 0; k < 5; ++k) {
            g(k) = cur.value.grad[k];
            for (int l = 0; l < 5; ++l) h(k, l) = cur.gauss_newton[k][l];
            diag_max = std::max(diag_max, h(k, k));
        }
        if (!(diag_max > 0)) break;
        const auto base = p.as_array();
        bool accepted = false;
        double step = 0;
        for (int tries = 0; tries < 12 && !accepted; ++tries) {
            Eigen::Matrix<double, 5, 5> damped = h;
            for (int k = 0; k < 5; ++k) damped(k, k) += lambda * (h(k, k) + 1e-9 * diag_max);
            const Eigen::Matrix<double, 5, 1> d = damped.ldlt().solve(-g);
            std::array<double, 5> trial{};
            for (int k = 0; k < 5; ++k) trial[k] = std::clamp(base[k] + d(k), 1e-9, 1 - 1e-9);
            const auto cand = NormalizedEllipse::from_array(trial);
            double l = std::numeric_limits<double>::infinity();
            if (is_valid(target.frame().to_grid(cand))) {
                l = target.frozen_loss(cand, opt, cur.normalizer);
            }
            if (l < cur.value.loss) {
                accepted = true;
                step = d.cwiseAbs().maxCoeff();
                p = cand;
                lambda = std::max(lambda / 3, 1e-9);
            } else {
                lambda *= 4;
            }
        }
        if (!accepted || step < 1e-10) break;
    }
    return p;
}

}  // namespace detail

/// One Adam run on u = logit(params). The step size decays by 0.2 at 1/6,
/// 1/3, 1/2 and 5/6 of max_iters. Stops once the best-so-far loss improved
/// by less than tol_rel_loss (relative) over the last `window` iterations,
/// then polishes the best parameters.
inline FitResult optimize(const ConditionedTarget& target, const NormalizedEllipse& start,
                          const FitConfig& cfg) {
    const ObjectiveOptions opt = cfg.objective();
    std::array<double, 5> u{};
    const auto p0 = start.as_array();
    for (int k = 0; k < 5; ++k) {
        u[k] = detail::logit(std::clamp(p0[k], 1e-12, 1 - 1e-12));
    }
    auto params_of = [](const std::array<double, 5>& uu) {
        std::array<double, 5> p{};
        for (int k = 0; k < 5; ++k) p[k] = sigmoid(uu[k]);
        return NormalizedEllipse::from_array(p);
    };

    const std::array<int, 4> milestones{cfg.max_iters / 6, cfg.max_iters / 3, cfg.max_iters / 2,
                                        cfg.max_iters * 5 / 6};
    std::array<double, 5> m{}, v{};
    std::vector<double> best_hist;
    best_hist.reserve(static_cast<std::size_t>(cfg.max_iters));
    NormalizedEllipse best_params = params_of(u);
    double best_loss = std::numeric_limits<double>::infinity();
    double b1t = 1.0, b2t = 1.0;
    FitResult res;

    for (int t = 0; t < cfg.max_iters; ++t) {
        const NormalizedEllipse p = params_of(u);
        const LossGrad lg = target.evaluate(p, opt);
        if (lg.loss < best_loss) {
            best_loss = lg.loss;
            best_params = p;
        }
        best_hist.push_back(best_loss);
        res.iters_used = t + 1;
        if (t >= cfg.window) {
            const double before = best_hist[static_cast<std::size_t>(t - cfg.window)];
            if (before - best_loss <= cfg.tol_rel_loss * std::max(before, 1e-300)) {
                res.converged = true;
                break;
            }
        }

        double lr = cfg.lr;
        for (int ms : milestones) {
            if (t >= ms) lr *= 0.2;
        }
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        const auto pv = p.as_array();
        for (int k = 0; k < 5; ++k) {
            const double g = lg.grad[k] * pv[k] * (1 - pv[k]);
            m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g;
            const double mh = m[k] / (1 - b1t);
            const double vh = v[k] / (1 - b2t);
            u[k] -= lr * mh / (std::sqrt(vh) + cfg.adam_eps);
        }
    }
    if (cfg.polish_iters > 0) {
        best_params = detail::polish(target, best_params, cfg);
        best_loss = target.evaluate(best_params, opt, false).loss;
    }
    res.final_loss = best_loss;
    res.ellipse = canonicalize(target.frame().to_absolute(best_params));
    return res;
}

inline FitResult optimize(const NormalizedEllipse& start, const Frame& frame, const BinaryMask& eye,
                          const BinaryMask& gt_visible, const FitConfig& cfg) {
    cfg.validate();
    return optimize(ConditionedTarget(frame, eye, gt_visible), start, cfg);
}

/// Best-of-restarts from an absolute initial ellipse. Restart 0 starts at
/// `init`; later restarts jitter it with a per-restart seed stream.
inline FitResult fit_with_restarts(const ConditionedTarget& target, const Ellipse5D& init,
                                   const FitConfig& cfg) {
    cfg.validate();
    const Frame& frame = target.frame();
    FitResult best;
    bool have = false;
    for (int r = 0; r < cfg.restarts; ++r) {
        Ellipse5D start = init;
        if (r > 0) {
            Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(r));
            start = detail::jitter(init, frame, cfg, rng);
        }
        FitResult fr = optimize(target, detail::start_params(frame, start), cfg);
        fr.restart_index = r;
        if (!have || fr.final_loss < best.final_loss) {
            best = fr;
            have = true;
        }
    }
    return best;
}

inline FitResult fit_iris(const BinaryMask& visible_iris_region, const BinaryMask& eye,
                          const FitConfig& cfg) {
    cfg.validate();
    require_same_shape(visible_iris_region, eye);
    const Ellipse5D init = init_from_visible(visible_iris_region, eye, cfg.inflate_iris);
    const Frame frame = Frame::image(eye.width(), eye.height(), cfg.eps_iris);
    return fit_with_restarts(ConditionedTarget(frame, eye, visible_iris_region), init, cfg);
}

/// Eye and visible-pupil masks resampled into the iris bounding square.
struct RoiInputs {
    BoundingSquare square;
    BinaryMask eye;
    BinaryMask visible;  // nearest; used for initialization
    SoftMask visible_soft;  // bilinear; the loss labels
    bool clipped = false;
};

inline RoiInputs crop_roi(const BinaryMask& visible_pupil, const BinaryMask& eye,
                          const Ellipse5D& iris, int roi_size) {
    require_same_shape(visible_pupil, eye);
    RoiInputs in;
    in.square = bounding_square(iris);
    if (!square_overlaps(in.square, eye.width(), eye.height())) {
        throw Error(ErrorCode::RoIOutOfBounds, "iris bounding square does not meet the image");
    }
    in.clipped = !square_inside(in.square, eye.width(), eye.height());
    in.eye = threshold(crop_bilinear(eye, in.square, roi_size), 0.5 - 1e-12);
    in.visible = crop_nearest(visible_pupil, in.square, roi_size);
    in.visible_soft = crop_bilinear(visible_pupil, in.square, roi_size);
    return in;
}

inline FitResult fit_pupil(const BinaryMask& visible_pupil, const BinaryMask& eye,
                           const Ellipse5D& iris, const FitConfig& cfg) {
    cfg.validate();
    const RoiInputs in = crop_roi(visible_pupil, eye, iris, cfg.roi_size);
    const Frame frame = Frame::region(in.square, cfg.roi_size, cfg.eps_pupil);
    const Ellipse5D init_grid = init_from_visible(in.visible, in.eye, cfg.inflate_pupil);
    // init is in RoI pixels; restarts and normalization work in absolute terms
    const double k = in.square.s / cfg.roi_size;
    Ellipse5D init = init_grid;
    init.x0 = in.square.x1 + (init_grid.x0 + 0.5) * k;
    init.y0 = in.square.y1 + (init_grid.y0 + 0.5) * k;
    init.a *= k;
    init.b *= k;
    return fit_with_restarts(ConditionedTarget(frame, in.eye, in.visible_soft), init, cfg);
}

/// Pupil fitted over the whole image frame (no iris RoI), normalized like
/// the iris and floored with eps_iris.
inline FitResult fit_pupil_full_frame(const BinaryMask& visible_pupil, const BinaryMask& eye,
                                      const FitConfig& cfg) {
    cfg.validate();
    require_same_shape(visible_pupil, eye);
    const Ellipse5D init = init_from_visible(visible_pupil, eye, cfg.inflate_pupil);
    const Frame frame = Frame::image(eye.width(), eye.height(), cfg.eps_iris);
    return fit_with_restarts(ConditionedTarget(frame, eye, visible_pupil), init, cfg);
}

inline SceneFit fit_scene(const BinaryMask& visible_pupil, const BinaryMask& visible_iris_region,
                          const BinaryMask& eye, const FitConfig& cfg) {
    SceneFit out;
    out.iris = fit_iris(visible_iris_region, eye, cfg);
    out.roi = bounding_square(out.iris.ellipse);
    if (cfg.use_roi) {
        out.roi_clipped = !square_inside(out.roi, eye.width(), eye.height());
        out.pupil = fit_pupil(visible_pupil, eye, out.iris.ellipse, cfg);
    } else {
        out.pupil = fit_pupil_full_frame(visible_pupil, eye, cfg);
    }
    return out;
}

enum class EyeClass : std::uint8_t { Outside = 0, Sclera = 1, Iris = 2, Pupil = 3 };

/// 3-class map inside the eye region: pupil, iris (iris-region minus pupil),
/// sclera (eye minus iris-region). Pixels outside the eye are Outside.
inline Image<std::uint8_t> assemble_classes(const Ellipse5D& iris, const Ellipse5D& pupil,
                                            const BinaryMask& eye) {
    const BinaryMask hi = hard_mask(iris, eye.width(), eye.height());
    const BinaryMask hp = hard_mask(pupil, eye.width(), eye.height());
    Image<std::uint8_t> out(eye.width(), eye.height());
    auto e = eye.pixels();
    auto i = hi.pixels();
    auto p = hp.pixels();
    auto o = out.pixels();
    for (std::size_t k = 0; k < o.size(); ++k) {
        EyeClass c = EyeClass::Outside;
        if (e[k]) c = p[k] ? EyeClass::Pupil : (i[k] ? EyeClass::Iris : EyeClass::Sclera);
        o[k] = static_cast<std::uint8_t>(c);
    }
    return out;
}

}  // namespace condseg
