#pragma once

// Binary PGM (P5, maxval 255) mask I/O. Probabilities are quantized as
// round(p * 255); binary masks are stored as 0 / 255.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "condseg/error.hpp"
#include "condseg/image.hpp"

namespace condseg::pgm {

using GrayImage = Image<std::uint8_t>;

inline std::uint8_t quantize(double p) {
    const double c = std::clamp(p, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

inline std::vector<std::uint8_t> encode(const GrayImage& img) {
    const std::string header = "P5\n" + std::to_string(img.width()) + " " +
                               std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels().begin(), img.pixels().end());
    return out;
}

inline GrayImage from_binary(const BinaryMask& m) {
    GrayImage g(m.width(), m.height());
    std::transform(m.pixels().begin(), m.pixels().end(), g.pixels().begin(),
                   [](std::uint8_t v) -> std::uint8_t { return v ? 255 : 0; });
    return g;
}

inline GrayImage from_soft(const SoftMask& m) {
    GrayImage g(m.width(), m.height());
    std::transform(m.pixels().begin(), m.pixels().end(), g.pixels().begin(), quantize);
    return g;
}

namespace detail {

class HeaderReader {
public:
    explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    // Next whitespace-delimited token, skipping '#' comments.
    std::string token() {
        for (;;) {
            while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
            if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
                continue;
            }
            break;
        }
        std::string tok;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') {
            tok.push_back(static_cast<char>(bytes_[pos_++]));
        }
        return tok;
    }

    int number() {
        const std::string tok = token();
        if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit) || tok.size() > 9) {
            throw Error(ErrorCode::Format, "bad PGM header field '" + tok + "'");
        }
        return std::stoi(tok);
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_offset() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw Error(ErrorCode::Format, "PGM header not terminated");
        }
        return pos_ + 1;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline GrayImage decode(const std::vector<std::uint8_t>& bytes) {
    detail::HeaderReader rd(bytes);
    if (rd.token() != "P5") throw Error(ErrorCode::Format, "not a binary PGM (P5)");
    const int w = rd.number();
    const int h = rd.number();
    const int maxval = rd.number();
    if (maxval != 255) throw Error(ErrorCode::Format, "only maxval 255 is supported");
    const std::size_t off = rd.raster_offset();
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() < off + n) throw Error(ErrorCode::Format, "truncated PGM raster");
    GrayImage img(w, h);
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(off), n, img.pixels().begin());
    return img;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write(const std::filesystem::path& path, const GrayImage& img) {
    write_bytes(path, encode(img));
}
inline void write_binary(const std::filesystem::path& path, const BinaryMask& m) {
    write(path, from_binary(m));
}
inline void write_soft(const std::filesystem::path& path, const SoftMask& m) {
    write(path, from_soft(m));
}

inline GrayImage read(const std::filesystem::path& path) {
    try {
        return decode(read_bytes(path));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Format) {
            throw Error(ErrorCode::Format, path.string() + ": " + e.what());
        }
        throw;
    }
}

/// Values >= 128 become 1.
inline BinaryMask read_binary(const std::filesystem::path& path) {
    const GrayImage g = read(path);
    BinaryMask m(g.width(), g.height());
    std::transform(g.pixels().begin(), g.pixels().end(), m.pixels().begin(),
                   [](std::uint8_t v) -> std::uint8_t { return v >= 128 ? 1 : 0; });
    return m;
}

inline SoftMask read_soft(const std::filesystem::path& path) {
    const GrayImage g = read(path);
    SoftMask m(g.width(), g.height());
    std::transform(g.pixels().begin(), g.pixels().end(), m.pixels().begin(),
                   [](std::uint8_t v) { return v / 255.0; });
    return m;
}

}  // namespace condseg::pgm
