#pragma once

#include "aqua/grid.hpp"

namespace aqua {

/// Bilinear resize of a plane stack to an explicit size. Samples at
/// (dst + 0.5) * src/dst - 0.5 with edge clamping, so constants stay exact.
inline Grid resize_bilinear(const Grid& src, int out_rows, int out_cols) {
    if (out_rows < 1 || out_cols < 1) throw Error("resize: empty output");
    const int P = src.planes(), H = src.rows(), W = src.cols();
    Grid out(Shape{P, out_rows, out_cols});
    const double sy = static_cast<double>(H) / out_rows;
    const double sx = static_cast<double>(W) / out_cols;
    for (int p = 0; p < P; ++p)
        for (int r = 0; r < out_rows; ++r) {
            double y = (r + 0.5) * sy - 0.5;
            y = std::min(std::max(y, 0.0), static_cast<double>(H - 1));
            const int y0 = static_cast<int>(y);
            const int y1 = std::min(y0 + 1, H - 1);
            const double fy = y - y0;
            for (int c = 0; c < out_cols; ++c) {
                double x = (c + 0.5) * sx - 0.5;
                x = std::min(std::max(x, 0.0), static_cast<double>(W - 1));
                const int x0 = static_cast<int>(x);
                const int x1 = std::min(x0 + 1, W - 1);
                const double fx = x - x0;
                out.at(p, r, c) = (1.0 - fy) * ((1.0 - fx) * src.at(p, y0, x0) + fx * src.at(p, y0, x1)) +
                                  fy * ((1.0 - fx) * src.at(p, y1, x0) + fx * src.at(p, y1, x1));
            }
        }
    return out;
}

inline int scaled_size(int size, double scale) {
    int out = static_cast<int>(std::lround(size * scale));
    return std::max(out, 1);
}

inline Grid resize_bilinear(const Grid& src, double scale) {
    return resize_bilinear(src, scaled_size(src.rows(), scale), scaled_size(src.cols(), scale));
}

/// Crops rows [r0, r0+h) x cols [c0, c0+w) from every plane.
inline Grid crop(const Grid& src, int r0, int c0, int h, int w) {
    if (r0 < 0 || c0 < 0 || r0 + h > src.rows() || c0 + w > src.cols())
        throw Error("crop: window outside the grid");
    Grid out(Shape{src.planes(), h, w});
    for (int p = 0; p < src.planes(); ++p)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) out.at(p, r, c) = src.at(p, r0 + r, c0 + c);
    return out;
}

} // namespace aqua
