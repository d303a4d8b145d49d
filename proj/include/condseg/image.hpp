#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "condseg/error.hpp"

namespace condseg {

/// Row-major W x H grid. `at(x, y)` addresses column x, row y.
template <class T>
class Image {
public:
    using value_type = T;

    Image() = default;
    Image(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(checked_area(width, height)), fill) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& at(int x, int y) { return data_[index(x, y)]; }
    const T& at(int x, int y) const { return data_[index(x, y)]; }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    std::span<T> pixels() noexcept { return data_; }
    std::span<const T> pixels() const noexcept { return data_; }

    std::span<T> row(int y) { return std::span<T>(data_).subspan(index(0, y), width_); }
    std::span<const T> row(int y) const {
        return std::span<const T>(data_).subspan(index(0, y), width_);
    }

    bool same_shape(const auto& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    bool operator==(const Image&) const = default;

private:
    static long checked_area(int w, int h) {
        if (w < 0 || h < 0) throw Error(ErrorCode::InvalidArgument, "negative image size");
        return static_cast<long>(w) * h;
    }
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

/// Unbounded real field (the distmap).
using ScalarField = Image<double>;
/// Probability mask, values in [0,1] (segmap, resampled eye mask).
using SoftMask = Image<double>;
/// Binary mask, values in {0,1}.
using BinaryMask = Image<std::uint8_t>;

template <class A, class B>
void require_same_shape(const Image<A>& a, const Image<B>& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw Error(ErrorCode::ShapeMismatch, "mask dimensions differ");
    }
}

inline std::size_t count_positive(const BinaryMask& m) {
    std::size_t n = 0;
    for (auto v : m.pixels()) n += v != 0;
    return n;
}

inline BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b);
    BinaryMask out(a.width(), a.height());
    auto pa = a.pixels();
    auto pb = b.pixels();
    auto po = out.pixels();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = (pa[i] && pb[i]) ? 1 : 0;
    return out;
}

inline BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b);
    BinaryMask out(a.width(), a.height());
    auto pa = a.pixels();
    auto pb = b.pixels();
    auto po = out.pixels();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = (pa[i] || pb[i]) ? 1 : 0;
    return out;
}

/// a AND NOT b
inline BinaryMask mask_minus(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b);
    BinaryMask out(a.width(), a.height());
    auto pa = a.pixels();
    auto pb = b.pixels();
    auto po = out.pixels();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = (pa[i] && !pb[i]) ? 1 : 0;
    return out;
}

/// 1 where the value is strictly above `level`.
inline BinaryMask threshold(const SoftMask& m, double level = 0.5) {
    BinaryMask out(m.width(), m.height());
    auto pi = m.pixels();
    auto po = out.pixels();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = pi[i] > level ? 1 : 0;
    return out;
}

inline bool is_subset(const BinaryMask& inner, const BinaryMask& outer) {
    require_same_shape(inner, outer);
    auto pi = inner.pixels();
    auto po = outer.pixels();
    for (std::size_t i = 0; i < pi.size(); ++i) {
        if (pi[i] && !po[i]) return false;
    }
    return true;
}

}  // namespace condseg
