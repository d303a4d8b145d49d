#pragma once

// Closed-form ellipse algebra: 5D parameters, the general conic, bounding
// squares and the normalized (0,1)^5 parameterization used by the fitter.
//
// Coordinates: pixel (row i, col j) is the point (x = j, y = i), origin at
// the top-left corner, y pointing down.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "condseg/error.hpp"

namespace condseg {

inline constexpr double kPi = std::numbers::pi;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Absolute ellipse: center (x0, y0) and semi-axes in pixels, theta in
/// radians measured from the x-axis to the `a` axis.
struct Ellipse5D {
    double x0 = 0.0;
    double y0 = 0.0;
    double a = 1.0;
    double b = 1.0;
    double theta = 0.0;

    bool operator==(const Ellipse5D&) const = default;
};

/// Estimator-space parameters, every component in (0,1).
struct NormalizedEllipse {
    double xhat0 = 0.5;
    double yhat0 = 0.5;
    double ahat = 0.5;
    double bhat = 0.5;
    double thetahat = 0.5;

    std::array<double, 5> as_array() const { return {xhat0, yhat0, ahat, bhat, thetahat}; }
    static NormalizedEllipse from_array(const std::array<double, 5>& v) {
        return {v[0], v[1], v[2], v[3], v[4]};
    }
};

/// Coefficients of A x^2 + B xy + C y^2 + D x + E y + F = 0.
struct ConicMatrix {
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;
    double D = 0.0;
    double E = 0.0;
    double F = 0.0;

    /// Symmetric 3x3 form M with x^T M x = conic(x, y) for x = [x, y, 1].
    std::array<std::array<double, 3>, 3> matrix() const {
        return {{{A, B / 2, D / 2}, {B / 2, C, E / 2}, {D / 2, E / 2, F}}};
    }

    double discriminant() const { return B * B - 4 * A * C; }
};

struct BoundingSquare {
    double x1 = 0.0;
    double y1 = 0.0;
    double s = 1.0;
};

inline bool is_valid(const Ellipse5D& e) {
    return std::isfinite(e.x0) && std::isfinite(e.y0) && std::isfinite(e.theta) &&
           std::isfinite(e.a) && std::isfinite(e.b) && e.a > 0 && e.b > 0;
}

inline void require_valid(const Ellipse5D& e) {
    if (!is_valid(e)) {
        throw Error(ErrorCode::DegenerateEllipse, "ellipse axes must be positive and finite");
    }
}

inline ConicMatrix to_conic(const Ellipse5D& e) {
    require_valid(e);
    const double s = std::sin(e.theta);
    const double c = std::cos(e.theta);
    const double ia2 = 1.0 / (e.a * e.a);
    const double ib2 = 1.0 / (e.b * e.b);
    ConicMatrix m;
    m.A = s * s * ib2 + c * c * ia2;
    m.B = 2.0 * (ia2 - ib2) * s * c;
    m.C = c * c * ib2 + s * s * ia2;
    m.D = -2.0 * m.A * e.x0 - m.B * e.y0;
    m.E = -m.B * e.x0 - 2.0 * m.C * e.y0;
    m.F = -(m.D * e.x0 + m.E * e.y0) / 2.0 - 1.0;
    return m;
}

/// x^T M x: negative inside, zero on the boundary, positive outside.
inline double eval_conic(const ConicMatrix& m, double x, double y) {
    return m.A * x * x + m.B * x * y + m.C * y * y + m.D * x + m.E * y + m.F;
}

/// Half extents of the axis-aligned box around the ellipse.
inline std::array<double, 2> half_extents(const Ellipse5D& e) {
    const double s = std::sin(e.theta);
    const double c = std::cos(e.theta);
    return {std::sqrt(e.a * e.a * c * c + e.b * e.b * s * s),
            std::sqrt(e.a * e.a * s * s + e.b * e.b * c * c)};
}

/// Minimum bounding square anchored at the top-left of the bounding box.
inline BoundingSquare bounding_square(const Ellipse5D& e) {
    require_valid(e);
    const auto [dw, dh] = half_extents(e);
    return {e.x0 - dw, e.y0 - dh, 2.0 * std::max(dw, dh)};
}

/// a >= b, theta in [0, pi); theta = 0 for circles.
inline Ellipse5D canonicalize(Ellipse5D e) {
    if (e.a < e.b) {
        std::swap(e.a, e.b);
        e.theta += kPi / 2;
    }
    double t = std::fmod(e.theta, kPi);
    if (t < 0) t += kPi;
    if (t >= kPi) t = 0.0;
    e.theta = t;
    if (std::abs(e.a - e.b) <= 1e-12 * e.a) e.theta = 0.0;
    return e;
}

/// `n` points at uniform parametric angle, starting on the +a axis.
inline std::vector<Point2> boundary_points(const Ellipse5D& e, int n) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "boundary_points needs n >= 1");
    std::vector<Point2> pts;
    pts.reserve(static_cast<std::size_t>(n));
    const double s = std::sin(e.theta);
    const double c = std::cos(e.theta);
    for (int k = 0; k < n; ++k) {
        const double t = 2.0 * kPi * k / n;
        const double u = e.a * std::cos(t);
        const double v = e.b * std::sin(t);
        pts.push_back({e.x0 + u * c - v * s, e.y0 + u * s + v * c});
    }
    return pts;
}

/// Inverse of to_conic for ellipse conics (any overall scale, any sign).
/// Returns the canonical form.
inline Ellipse5D conic_to_ellipse(ConicMatrix m) {
    if (!(m.discriminant() < 0)) {
        throw Error(ErrorCode::DegenerateEllipse, "conic is not an ellipse (B^2 - 4AC >= 0)");
    }
    if (m.A < 0) {
        m = {-m.A, -m.B, -m.C, -m.D, -m.E, -m.F};
    }
    const double det = 4 * m.A * m.C - m.B * m.B;
    const double x0 = (m.B * m.E - 2 * m.C * m.D) / det;
    const double y0 = (m.B * m.D - 2 * m.A * m.E) / det;
    // the conic is stationary at the center, so center error enters only quadratically
    const double f_center = eval_conic(m, x0, y0);
    if (!(f_center < 0)) {
        throw Error(ErrorCode::DegenerateEllipse, "conic has empty or point interior");
    }
    const double mean = (m.A + m.C) / 2;
    const double rad = std::hypot((m.A - m.C) / 2, m.B / 2);
    const double lam_large = mean + rad;
    // mean - rad cancels for elongated ellipses; use the determinant instead
    const double lam_small = det / (4 * lam_large);
    if (!(lam_small > 0)) {
        throw Error(ErrorCode::DegenerateEllipse, "quadratic form is not positive definite");
    }
    Ellipse5D e;
    e.x0 = x0;
    e.y0 = y0;
    e.a = std::sqrt(-f_center / lam_small);
    e.b = std::sqrt(-f_center / lam_large);
    e.theta = 0.5 * std::atan2(-m.B, m.C - m.A);
    return canonicalize(e);
}

// Normalized <-> absolute conversions. The angle maps as theta = thetahat * pi
// so a full half-turn is reachable.

inline Ellipse5D denormalize_iris(const NormalizedEllipse& n, double w, double h, double eps) {
    const double half = std::min(w, h) / 2.0;
    return {n.xhat0 * w, n.yhat0 * h, (n.ahat + eps) * half, (n.bhat + eps) * half,
            n.thetahat * kPi};
}

inline NormalizedEllipse normalize_iris(const Ellipse5D& e, double w, double h, double eps) {
    const double half = std::min(w, h) / 2.0;
    return {e.x0 / w, e.y0 / h, e.a / half - eps, e.b / half - eps, e.theta / kPi};
}

inline Ellipse5D denormalize_pupil(const NormalizedEllipse& n, const BoundingSquare& sq,
                                   double eps) {
    return {n.xhat0 * sq.s + sq.x1, n.yhat0 * sq.s + sq.y1, (n.ahat + eps) * sq.s / 2.0,
            (n.bhat + eps) * sq.s / 2.0, n.thetahat * kPi};
}

inline NormalizedEllipse normalize_pupil(const Ellipse5D& e, const BoundingSquare& sq,
                                         double eps) {
    return {(e.x0 - sq.x1) / sq.s, (e.y0 - sq.y1) / sq.s, 2.0 * e.a / sq.s - eps,
            2.0 * e.b / sq.s - eps, e.theta / kPi};
}

}  // namespace condseg
