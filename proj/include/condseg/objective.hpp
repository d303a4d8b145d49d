#pragma once

// Eye-region conditioned BCE between the soft ellipse mask and a visible-only
// ground truth (binary, or soft after resampling), plus its exact gradient w.r.t. the normalized parameters.
//
// The segmap normalizer max(D) + delta is treated as a constant when
// differentiating.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "condseg/geometry.hpp"
#include "condseg/image.hpp"
#include "condseg/raster.hpp"

namespace condseg {

inline constexpr double kProbabilityFloor = 1e-7;
inline constexpr double kSaturatedLogit = 17.0;

/// Evaluation grid plus the mapping from normalized to absolute parameters.
/// Image frames normalize against the full image (iris); region frames
/// against a resampled bounding square (pupil).
struct Frame {
    int width = 0;
    int height = 0;
    double eps = 0.01;
    std::optional<BoundingSquare> roi;

    static Frame image(int w, int h, double eps) { return {w, h, eps, std::nullopt}; }
    static Frame region(const BoundingSquare& sq, int size, double eps) {
        return {size, size, eps, sq};
    }

    bool is_region() const { return roi.has_value(); }

    /// Grid coordinate of pixel 0. Region pixels sit at cell centers.
    double pixel_offset() const { return roi ? 0.5 : 0.0; }

    /// Parameters in evaluation-grid pixel coordinates.
    Ellipse5D to_grid(const NormalizedEllipse& n) const {
        if (roi) return denormalize_pupil(n, BoundingSquare{0.0, 0.0, double(width)}, eps);
        return denormalize_iris(n, width, height, eps);
    }
    NormalizedEllipse from_grid(const Ellipse5D& e) const {
        if (roi) return normalize_pupil(e, BoundingSquare{0.0, 0.0, double(width)}, eps);
        return normalize_iris(e, width, height, eps);
    }

    /// Grid parameters moved so pixel (x, y) sits at integer (x, y), ready for distmap.
    Ellipse5D to_raster(const NormalizedEllipse& n) const {
        Ellipse5D e = to_grid(n);
        e.x0 -= pixel_offset();
        e.y0 -= pixel_offset();
        return e;
    }

    /// Parameters in original image coordinates.
    Ellipse5D to_absolute(const NormalizedEllipse& n) const {
        if (roi) return denormalize_pupil(n, *roi, eps);
        return denormalize_iris(n, width, height, eps);
    }
    NormalizedEllipse from_absolute(const Ellipse5D& e) const {
        if (roi) return normalize_pupil(e, *roi, eps);
        return normalize_iris(e, width, height, eps);
    }

    /// d(grid parameter) / d(normalized parameter); the map is diagonal.
    std::array<double, 5> jacobian() const {
        if (roi) {
            const double r = width;
            return {r, r, r / 2, r / 2, kPi};
        }
        const double half = std::min(width, height) / 2.0;
        return {double(width), double(height), half, half, kPi};
    }
};

struct LossGrad {
    double loss = 0.0;
    std::array<double, 5> grad{};
};

struct ObjectiveOptions {
    double tau = kDefaultTau;
    double delta = kDefaultDelta;
    double p_min = kProbabilityFloor;
};

/// Number of gt-positive pixels lying outside the eye condition. Such
/// pixels are ignored by the loss; callers may want to warn about them.
inline std::size_t gt_outside_condition(const BinaryMask& gt, const BinaryMask& eye) {
    require_same_shape(gt, eye);
    std::size_t n = 0;
    auto g = gt.pixels();
    auto e = eye.pixels();
    for (std::size_t i = 0; i < g.size(); ++i) n += (g[i] && !e[i]);
    return n;
}

namespace detail {

// -ln of the clamped probability given to the true label.
inline double clamped_nll(double p_true, double p_min) {
    return -std::log(std::clamp(p_true, p_min, 1.0 - p_min));
}

}  // namespace detail

/// Mean BCE over eye-positive pixels; pixels outside the eye are skipped.
inline double conditioned_bce(const SoftMask& pred, const BinaryMask& eye, const BinaryMask& gt,
                              double p_min = kProbabilityFloor) {
    require_same_shape(pred, eye);
    require_same_shape(pred, gt);
    auto p = pred.pixels();
    auto e = eye.pixels();
    auto g = gt.pixels();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!e[i]) continue;
        sum += detail::clamped_nll(g[i] ? p[i] : 1.0 - p[i], p_min);
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::EmptyCondition, "eye-region mask has no positive pixel");
    return sum / static_cast<double>(n);
}

/// Same with soft labels y in [0, 1]: -(y ln p + (1 - y) ln(1 - p)).
inline double conditioned_bce(const SoftMask& pred, const BinaryMask& eye, const SoftMask& labels,
                              double p_min = kProbabilityFloor) {
    require_same_shape(pred, eye);
    require_same_shape(pred, labels);
    auto p = pred.pixels();
    auto e = eye.pixels();
    auto g = labels.pixels();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!e[i]) continue;
        sum += g[i] * detail::clamped_nll(p[i], p_min) + (1 - g[i]) * detail::clamped_nll(1.0 - p[i], p_min);
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::EmptyCondition, "eye-region mask has no positive pixel");
    return sum / static_cast<double>(n);
}

/// Eye-positive pixels of a (frame, eye, labels) triple, flattened once so each
/// optimizer step is a single pass over the condition.
class ConditionedTarget {
public:
    ConditionedTarget(const Frame& frame, const BinaryMask& eye, const BinaryMask& gt)
        : frame_(frame) {
        require_same_shape(eye, gt);
        collect(eye, [&](int x, int y) { return gt.at(x, y) ? 1.0 : 0.0; });
    }

    /// Soft labels in [0, 1], e.g. a resampled binary mask.
    ConditionedTarget(const Frame& frame, const BinaryMask& eye, const SoftMask& labels)
        : frame_(frame) {
        require_same_shape(eye, labels);
        collect(eye, [&](int x, int y) { return std::clamp(labels.at(x, y), 0.0, 1.0); });
    }

    const Frame& frame() const { return frame_; }
    std::size_t size() const { return pixels_.size(); }

    /// max(D) over the full grid. D is convex, so the max sits on a corner.
    double normalizer(const ConicMatrix& m, double delta) const {
        const double lo = frame_.pixel_offset();
        const double xr = frame_.width - 1 + lo;
        const double yb = frame_.height - 1 + lo;
        return std::max({eval_conic(m, lo, lo), eval_conic(m, xr, lo), eval_conic(m, lo, yb),
                         eval_conic(m, xr, yb)}) +
               delta;
    }

    LossGrad evaluate(const NormalizedEllipse& params, const ObjectiveOptions& opt,
                      bool with_grad = true) const {
        return pass(params, opt, std::nullopt, with_grad, nullptr).value;
    }

    /// Loss with the normalizer held at `normalizer`, the function whose
    /// derivative `evaluate` returns.
    double frozen_loss(const NormalizedEllipse& params, const ObjectiveOptions& opt,
                       double normalizer) const {
        return pass(params, opt, normalizer, false, nullptr).value.loss;
    }

    /// Loss, gradient and Gauss-Newton curvature sum_i p_i (1 - p_i) dz_i dz_i^T / n
    /// of the per-pixel logits z_i, all in normalized parameters.
    struct Curvature {
        LossGrad value;
        double normalizer = 0.0;
        std::array<std::array<double, 5>, 5> gauss_newton{};
    };

    Curvature curvature(const NormalizedEllipse& params, const ObjectiveOptions& opt) const {
        Curvature c;
        PassOutput out = pass(params, opt, std::nullopt, true, &c.gauss_newton);
        c.value = out.value;
        c.normalizer = out.normalizer;
        return c;
    }

private:
    struct PassOutput {
        LossGrad value;
        double normalizer = 0.0;
    };

    PassOutput pass(const NormalizedEllipse& params, const ObjectiveOptions& opt,
                    std::optional<double> fixed_normalizer, bool with_grad,
                    std::array<std::array<double, 5>, 5>* gn) const {
        const Ellipse5D e = frame_.to_grid(params);
        const ConicMatrix m = to_conic(e);
        const double norm = fixed_normalizer ? *fixed_normalizer : normalizer(m, opt.delta);
        if (!(norm > 0)) {
            throw Error(ErrorCode::NonPositiveNormalizer, "grid lies inside the ellipse");
        }
        const double scale = opt.tau / norm;
        const double c = std::cos(e.theta);
        const double s = std::sin(e.theta);
        const double ia2 = 1.0 / (e.a * e.a);
        const double ib2 = 1.0 / (e.b * e.b);
        const double hi = 1.0 - opt.p_min;
        const double nll_sure = detail::clamped_nll(1.0, opt.p_min);
        const double nll_wrong = detail::clamped_nll(0.0, opt.p_min);

    
        double loss = 0.0;
        std::array<double, 5> g{};
        std::array<std::array<double, 5>, 5> h{};
        for (const auto& px : pixels_) {
            const double d = eval_conic(m, px.x, px.y);
            const double z = -d * scale;
            const double yl = px.label;
            // Beyond |z| = 17 the sigmoid is within 4.2e-8 of 0 or 1, so the
            // clamp is active and the gradient vanishes.
            if (std::abs(z) > kSaturatedLogit && opt.p_min >= 1e-7) {
                loss += z > 0 ? yl * nll_sure + (1 - yl) * nll_wrong
                              : yl * nll_wrong + (1 - yl) * nll_sure;
                continue;
            }
            const double ez = std::exp(-std::abs(z));
            const double big = 1.0 / (1.0 + ez);
            const double small = ez / (1.0 + ez);
            const double p = z >= 0 ? big : small;
            const double q = z >= 0 ? small : big;
            loss += yl * detail::clamped_nll(p, opt.p_min) + (1 - yl) * detail::clamped_nll(q, opt.p_min);
            if (!with_grad || p <= opt.p_min || p >= hi) continue;

            // dD/d(x0, y0, a, b, theta) in rotated coordinates u, v
            const double dx = px.x - e.x0;
            const double dy = px.y - e.y0;
            const double u = dx * c + dy * s;
            const double v = -dx * s + dy * c;
            const double ua = 2.0 * u * ia2;
            const double vb = 2.0 * v * ib2;
            const double dd[5] = {-ua * c + vb * s, -ua * s - vb * c, -ua * u / e.a, -vb * v / e.b,
                                  u * v * 2.0 * (ia2 - ib2)};
            // dL/dz = p - y; dz/dD = -scale
            const double dl_dd = -(p - yl) * scale;
            for (int k = 0; k < 5; ++k) g[k] += dl_dd * dd[k];
            if (gn) {
                const double w = p * q * scale * scale;
                for (int k = 0; k < 5; ++k) {
                    for (int l = k; l < 5; ++l) h[k][l] += w * dd[k] * dd[l];
                }
            }
        }
        const double inv_n = 1.0 / static_cast<double>(pixels_.size());
        PassOutput out;
        out.normalizer = norm;
        out.value.loss = loss * inv_n;
        const auto jac = frame_.jacobian();
        for (int k = 0; k < 5; ++k) out.value.grad[k] = g[k] * inv_n * jac[k];
        if (gn) {
            for (int k = 0; k < 5; ++k) {
                for (int l = k; l < 5; ++l) {
                    (*gn)[k][l] = (*gn)[l][k] = h[k][l] * inv_n * jac[k] * jac[l];
                }
            }
        }
        return out;
    }

    struct Pixel {
        double x;
        double y;
        double label;
    };

    template <class Label>
    void collect(const BinaryMask& eye, Label label) {
        if (eye.width() != frame_.width || eye.height() != frame_.height) {
            throw Error(ErrorCode::ShapeMismatch, "masks do not match the frame grid");
        }
        const double off = frame_.pixel_offset();
        for (int y = 0; y < eye.height(); ++y) {
            for (int x = 0; x < eye.width(); ++x) {
                if (eye.at(x, y)) pixels_.push_back({x + off, y + off, label(x, y)});
            }
        }
        if (pixels_.empty()) {
            throw Error(ErrorCode::EmptyCondition, "eye-region mask has no positive pixel");
        }
    }

    Frame frame_;
    std::vector<Pixel> pixels_;
};

inline LossGrad loss_and_grad(const NormalizedEllipse& params, const Frame& frame,
                              const BinaryMask& eye, const BinaryMask& gt_visible,
                              const ObjectiveOptions& opt = {}) {
    return ConditionedTarget(frame, eye, gt_visible).evaluate(params, opt);
}

}  // namespace condseg
