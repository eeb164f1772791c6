#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "aqua/grid.hpp"

namespace aqua {

namespace detail {

inline void put_float_le(std::ostream& os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                 static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    os.write(b, 4);
}

inline float get_float(std::istream& is, bool little_endian) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t bits;
    if (little_endian)
        bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    else
        bits = static_cast<std::uint32_t>(b[3]) | (static_cast<std::uint32_t>(b[2]) << 8) |
               (static_cast<std::uint32_t>(b[1]) << 16) | (static_cast<std::uint32_t>(b[0]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

/// Writes through a temp file in the same directory, then renames into place.
template <typename WriteFn>
void atomic_write(const std::string& path, const WriteFn& fn) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot open for writing: " + tmp.string());
        fn(os);
        if (!os) throw Error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

} // namespace detail

// ---------------------------------------------------------------------------
// PFM (portable float map): Pf = 1 channel, PF = 3 channels.
// Negative scale marks little-endian data; rows are stored bottom-to-top.
// ---------------------------------------------------------------------------

inline void write_pfm(const std::string& path, const Grid& g) {
    const int C = g.planes();
    if (C != 1 && C != 3) throw Error("write_pfm: grid must have 1 or 3 planes");
    detail::atomic_write(path, [&](std::ostream& os) {
        os << (C == 1 ? "Pf" : "PF") << "\n" << g.cols() << " " << g.rows() << "\n-1.0\n";
        for (int r = g.rows() - 1; r >= 0; --r)
            for (int c = 0; c < g.cols(); ++c)
                for (int ch = 0; ch < C; ++ch)
                    detail::put_float_le(os, static_cast<float>(g.at(ch, r, c)));
    });
}

inline Grid read_pfm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open: " + path);
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    is >> magic >> w >> h >> scale;
    if (!is || (magic != "Pf" && magic != "PF") || w < 1 || h < 1 || scale == 0.0)
        throw Error("read_pfm: bad header in " + path);
    is.get(); // single whitespace before the raster
    const int C = magic == "Pf" ? 1 : 3;
    Grid g(Shape{C, h, w});
    const bool le = scale < 0.0;
    for (int r = h - 1; r >= 0; --r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < C; ++ch) g.at(ch, r, c) = detail::get_float(is, le);
    if (!is) throw Error("read_pfm: truncated raster in " + path);
    return g;
}

// ---------------------------------------------------------------------------
// PPM (P6, color) and PGM (P5, gray/masks), 8-bit
// ---------------------------------------------------------------------------

inline void write_ppm(const std::string& path, const Grid& g) {
    if (g.planes() != 3) throw Error("write_ppm: grid must have 3 planes");
    detail::atomic_write(path, [&](std::ostream& os) {
        os << "P6\n" << g.cols() << " " << g.rows() << "\n255\n";
        for (int r = 0; r < g.rows(); ++r)
            for (int c = 0; c < g.cols(); ++c)
                for (int ch = 0; ch < 3; ++ch) {
                    double v = std::min(std::max(g.at(ch, r, c), 0.0), 1.0);
                    os.put(static_cast<char>(std::lround(v * 255.0)));
                }
    });
}

/// Masks use 255 = set (static/visible), 0 = clear.
inline void write_pgm(const std::string& path, const Grid& g) {
    if (g.planes() != 1) throw Error("write_pgm: grid must have 1 plane");
    detail::atomic_write(path, [&](std::ostream& os) {
        os << "P5\n" << g.cols() << " " << g.rows() << "\n255\n";
        for (int r = 0; r < g.rows(); ++r)
            for (int c = 0; c < g.cols(); ++c) {
                double v = std::min(std::max(g.at(0, r, c), 0.0), 1.0);
                os.put(static_cast<char>(std::lround(v * 255.0)));
            }
    });
}

namespace detail {

inline void skip_pnm_whitespace(std::istream& is) {
    int c = is.peek();
    while (c == '#' || std::isspace(c)) {
        if (c == '#')
            while (is.get() != '\n' && is) {}
        else
            is.get();
        c = is.peek();
    }
}

inline Grid read_pnm_8bit(const std::string& path, const char* magic_want, int channels) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open: " + path);
    std::string magic;
    is >> magic;
    if (magic != magic_want) throw Error("read_pnm: expected " + std::string(magic_want) + " in " + path);
    detail::skip_pnm_whitespace(is);
    int w = 0, h = 0, maxval = 0;
    is >> w;
    detail::skip_pnm_whitespace(is);
    is >> h;
    detail::skip_pnm_whitespace(is);
    is >> maxval;
    if (!is || w < 1 || h < 1 || maxval != 255) throw Error("read_pnm: bad header in " + path);
    is.get();
    Grid g(Shape{channels, h, w});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < channels; ++ch) {
                int v = is.get();
                if (v < 0) throw Error("read_pnm: truncated raster in " + path);
                g.at(ch, r, c) = v / 255.0;
            }
    return g;
}

} // namespace detail

inline Grid read_ppm(const std::string& path) { return detail::read_pnm_8bit(path, "P6", 3); }
inline Grid read_pgm(const std::string& path) { return detail::read_pnm_8bit(path, "P5", 1); }

/// Reads a color image by extension (.ppm or .pfm with 3 planes).
inline Grid read_image_any(const std::string& path) {
    auto ends_with = [&](const char* suf) {
        std::string s(suf);
        return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".ppm")) return read_ppm(path);
    if (ends_with(".pfm")) {
        Grid g = read_pfm(path);
        if (g.planes() != 3) throw Error("read_image_any: expected 3-channel PFM: " + path);
        return g;
    }
    throw Error("read_image_any: unsupported extension: " + path);
}

} // namespace aqua
