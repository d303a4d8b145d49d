#pragma once

// Ellipse -> mask conversion. The distmap holds x^T M x at every integer
// pixel coordinate; the segmap squashes it through a sigmoid scaled by
// tau / (max(D) + delta).

#include <algorithm>
#include <cmath>
#include <limits>

#include "condseg/geometry.hpp"
#include "condseg/image.hpp"

namespace condseg {

inline constexpr double kDefaultTau = 800.0;
inline constexpr double kDefaultDelta = 1e-6;

inline double sigmoid(double z) {
    // Split on sign so exp never overflows.
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double ez = std::exp(z);
    return ez / (1.0 + ez);
}

inline ScalarField distmap(const Ellipse5D& e, int w, int h) {
    if (w < 1 || h < 1) throw Error(ErrorCode::InvalidArgument, "distmap needs w, h >= 1");
    const ConicMatrix m = to_conic(e);
    ScalarField d(w, h);
    for (int y = 0; y < h; ++y) {
        auto row = d.row(y);
        for (int x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = eval_conic(m, x, y);
    }
    return d;
}

inline double field_max(const ScalarField& d) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : d.pixels()) mx = std::max(mx, v);
    return mx;
}

/// sigmoid(-D * tau / normalizer) with a caller-supplied normalizer.
inline SoftMask segmap_with_normalizer(const ScalarField& d, double tau, double normalizer) {
    if (!(normalizer > 0)) {
        throw Error(ErrorCode::NonPositiveNormalizer, "segmap normalizer must be positive");
    }
    const double scale = tau / normalizer;
    SoftMask s(d.width(), d.height());
    auto in = d.pixels();
    auto out = s.pixels();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = sigmoid(-in[i] * scale);
    return s;
}

inline SoftMask segmap(const ScalarField& d, double tau = kDefaultTau, double delta = kDefaultDelta) {
    if (!(tau > 0) || !(delta > 0)) {
        throw Error(ErrorCode::InvalidArgument, "segmap needs tau > 0 and delta > 0");
    }
    const double norm = field_max(d) + delta;
    if (!(norm > 0)) {
        throw Error(ErrorCode::NonPositiveNormalizer, "max(D) + delta <= 0: grid lies inside the ellipse");
    }
    return segmap_with_normalizer(d, tau, norm);
}

inline SoftMask ellp2mask(const Ellipse5D& e, int w, int h, double tau = kDefaultTau,
                          double delta = kDefaultDelta) {
    return segmap(distmap(e, w, h), tau, delta);
}

/// 1 strictly inside (D < 0); boundary pixels are excluded.
inline BinaryMask hard_mask(const Ellipse5D& e, int w, int h) {
    const ConicMatrix m = to_conic(e);
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y) {
        auto row = out.row(y);
        for (int x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = eval_conic(m, x, y) < 0 ? 1 : 0;
    }
    return out;
}

}  // namespace condseg
