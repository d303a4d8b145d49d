#pragma once

// Classical ellipse fitting from mask contours: ellipse-specific direct
// least squares (Halir-Flusser formulation of Fitzgibbon's method) wrapped
// in RANSAC with a Sampson-distance inlier test.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "condseg/error.hpp"
#include "condseg/geometry.hpp"
#include "condseg/image.hpp"
#include "condseg/rng.hpp"

namespace condseg {

/// Positive pixels with at least one 4-neighbour that is background or off
/// the image, in row-major order.
inline std::vector<Point2> contour_points(const BinaryMask& mask) {
    std::vector<Point2> pts;
    bool any = false;
    auto on = [&](int x, int y) { return mask.contains(x, y) && mask.at(x, y) != 0; };
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            any = true;
            if (!on(x - 1, y) || !on(x + 1, y) || !on(x, y - 1) || !on(x, y + 1)) {
                pts.push_back({double(x), double(y)});
            }
        }
    }
    if (!any) throw Error(ErrorCode::EmptyMask, "mask has no positive pixel");
    return pts;
}

/// Conic fitted by direct least squares; coefficients refer to the original
/// point coordinates.
inline ConicMatrix direct_lsq_conic(const std::vector<Point2>& points) {
    const std::size_t n = points.size();
    if (n < 6) throw Error(ErrorCode::InsufficientPoints, "direct least squares needs >= 6 points");

    double mx = 0, my = 0;
    for (const auto& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= double(n);
    my /= double(n);
    double spread = 0;
    for (const auto& p : points) spread += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
    spread = std::sqrt(spread / double(n));
    if (!(spread > 0)) throw Error(ErrorCode::DegenerateConfiguration, "all points coincide");

    Eigen::MatrixXd d1(n, 3), d2(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = (points[i].x - mx) / spread;
        const double y = (points[i].y - my) / spread;
        const auto r = static_cast<Eigen::Index>(i);
        d1.row(r) << x * x, x * y, y * y;
        d2.row(r) << x, y, 1.0;
    }
    const Eigen::Matrix3d s1 = d1.transpose() * d1;
    const Eigen::Matrix3d s2 = d1.transpose() * d2;
    const Eigen::Matrix3d s3 = d2.transpose() * d2;

    Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
    lu.setThreshold(1e-10);
    if (lu.rank() < 3) throw Error(ErrorCode::DegenerateConfiguration, "points are collinear");
    const Eigen::Matrix3d t = -lu.solve(s2.transpose());
    const Eigen::Matrix3d reduced = s1 + s2 * t;
    Eigen::Matrix3d m;
    m.row(0) = reduced.row(2) / 2.0;
    m.row(1) = -reduced.row(1);
    m.row(2) = reduced.row(0) / 2.0;

    Eigen::EigenSolver<Eigen::Matrix3d> es(m);
    const Eigen::Matrix3cd vecs = es.eigenvectors();
    int pick = -1;
    double best = 0;
    for (int k = 0; k < 3; ++k) {
        const Eigen::Vector3d v = vecs.col(k).real();
        const double cond = 4 * v(0) * v(2) - v(1) * v(1);
        if (cond > best) {
            best = cond;
            pick = k;
        }
    }
    if (pick < 0) throw Error(ErrorCode::DegenerateConfiguration, "no ellipse-specific solution");
    const Eigen::Vector3d a1 = vecs.col(pick).real();
    const Eigen::Vector3d a2 = t * a1;

    // Undo x' = (x - mx) / s, y' = (y - my) / s.
    const double s = spread;
    const double A = a1(0) / (s * s);
    const double B = a1(1) / (s * s);
    const double C = a1(2) / (s * s);
    const double D1 = a2(0) / s;
    const double E1 = a2(1) / s;
    const double F1 = a2(2);
    ConicMatrix c;
    c.A = A;
    c.B = B;
    c.C = C;
    c.D = -2 * A * mx - B * my + D1;
    c.E = -B * mx - 2 * C * my + E1;
    c.F = A * mx * mx + B * mx * my + C * my * my - D1 * mx - E1 * my + F1;
    return c;
}

inline Ellipse5D direct_lsq_ellipse(const std::vector<Point2>& points) {
    const ConicMatrix c = direct_lsq_conic(points);
    try {
        return conic_to_ellipse(c);
    } catch (const Error&) {
        throw Error(ErrorCode::DegenerateConfiguration, "fitted conic is not a real ellipse");
    }
}

/// First-order geometric distance |Q| / |grad Q| from a point to a conic.
inline double sampson_distance(const ConicMatrix& c, const Point2& p) {
    const double q = eval_conic(c, p.x, p.y);
    const double gx = 2 * c.A * p.x + c.B * p.y + c.D;
    const double gy = c.B * p.x + 2 * c.C * p.y + c.E;
    const double g = std::hypot(gx, gy);
    if (!(g > 0)) return std::abs(q) > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    return std::abs(q) / g;
}

struct RansacOptions {
    int iters = 500;
    double inlier_thresh = 1.5;  // px, Sampson distance
    double min_inlier_ratio = 0.3;
    std::uint64_t seed = 0;
};

struct RansacResult {
    Ellipse5D ellipse;
    std::size_t inliers = 0;
    double inlier_ratio = 0.0;
};

inline RansacResult ransac_ellipse_detailed(const std::vector<Point2>& points,
                                            const RansacOptions& opt) {
    const std::size_t n = points.size();
    if (n < 6) throw Error(ErrorCode::InsufficientPoints, "RANSAC needs >= 6 points");

    std::vector<std::uint8_t> best_mask;
    std::size_t best_count = 0;
    std::vector<Point2> sample(6);
    for (int it = 0; it < opt.iters; ++it) {
        Rng rng = Rng::stream(opt.seed, static_cast<std::uint64_t>(it));
        std::array<std::size_t, 6> idx{};
        for (std::size_t k = 0; k < 6; ++k) {
            bool fresh = false;
            while (!fresh) {
                idx[k] = static_cast<std::size_t>(rng.below(n));
                fresh = std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                                  idx[k]) == idx.begin() + static_cast<std::ptrdiff_t>(k);
            }
            sample[k] = points[idx[k]];
        }
        ConicMatrix c;
        try {
            c = direct_lsq_conic(sample);
            (void)conic_to_ellipse(c);
        } catch (const Error&) {
            continue;
        }
        std::vector<std::uint8_t> mask(n);
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            mask[i] = sampson_distance(c, points[i]) <= opt.inlier_thresh;
            count += mask[i];
        }
        if (count > best_count) {
            best_count = count;
            best_mask = std::move(mask);
        }
    }
    const double ratio = static_cast<double>(best_count) / static_cast<double>(n);
    if (best_count < 6 || ratio < opt.min_inlier_ratio) {
        throw Error(ErrorCode::NoConsensus, "best inlier ratio below threshold");
    }
    std::vector<Point2> inl;
    inl.reserve(best_count);
    for (std::size_t i = 0; i < n; ++i) {
        if (best_mask[i]) inl.push_back(points[i]);
    }
    return {direct_lsq_ellipse(inl), best_count, ratio};
}

inline Ellipse5D ransac_ellipse(const std::vector<Point2>& points, int iters, double inlier_thresh,
                                std::uint64_t seed) {
    RansacOptions opt;
    opt.iters = iters;
    opt.inlier_thresh = inlier_thresh;
    opt.seed = seed;
    return ransac_ellipse_detailed(points, opt).ellipse;
}

}  // namespace condseg
