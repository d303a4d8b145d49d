#pragma once

// Square RoI resampling. RoI pixel (j, i) samples the source image at its
// center (x1 + (j + 0.5) * s / size, y1 + (i + 0.5) * s / size); samples
// outside the source read 0.

#include <cmath>
#include <cstdint>

#include "condseg/geometry.hpp"
#include "condseg/image.hpp"

namespace condseg {

inline Point2 roi_to_image(const BoundingSquare& sq, int size, double j, double i) {
    const double step = sq.s / size;
    return {sq.x1 + (j + 0.5) * step, sq.y1 + (i + 0.5) * step};
}

/// True when the square and the pixel grid [0, w-1] x [0, h-1] overlap.
inline bool square_overlaps(const BoundingSquare& sq, int w, int h) {
    return sq.x1 + sq.s >= 0 && sq.y1 + sq.s >= 0 && sq.x1 <= w - 1 && sq.y1 <= h - 1;
}

inline bool square_inside(const BoundingSquare& sq, int w, int h) {
    return sq.x1 >= 0 && sq.y1 >= 0 && sq.x1 + sq.s <= w - 1 && sq.y1 + sq.s <= h - 1;
}

template <class T>
double sample_bilinear(const Image<T>& img, double x, double y) {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const double tx = x - fx;
    const double ty = y - fy;
    auto px = [&](int xx, int yy) -> double {
        return img.contains(xx, yy) ? static_cast<double>(img.at(xx, yy)) : 0.0;
    };
    const double top = px(x0, y0) * (1 - tx) + px(x0 + 1, y0) * tx;
    const double bot = px(x0, y0 + 1) * (1 - tx) + px(x0 + 1, y0 + 1) * tx;
    return top * (1 - ty) + bot * ty;
}

inline SoftMask crop_bilinear(const BinaryMask& src, const BoundingSquare& sq, int size) {
    SoftMask out(size, size);
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            const Point2 p = roi_to_image(sq, size, j, i);
            out.at(j, i) = sample_bilinear(src, p.x, p.y);
        }
    }
    return out;
}

inline BinaryMask crop_nearest(const BinaryMask& src, const BoundingSquare& sq, int size) {
    BinaryMask out(size, size);
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            const Point2 p = roi_to_image(sq, size, j, i);
            const int x = static_cast<int>(std::floor(p.x + 0.5));
            const int y = static_cast<int>(std::floor(p.y + 0.5));
            out.at(j, i) = (src.contains(x, y) && src.at(x, y)) ? 1 : 0;
        }
    }
    return out;
}

}  // namespace condseg
