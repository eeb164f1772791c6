#pragma once

#include <cmath>

#include "aqua/grid.hpp"

namespace aqua_test {

/// Peak signal-to-noise ratio over an interior window (margin pixels skipped
/// on every side), signal peak 1.0.
inline double psnr(const aqua::Grid& a, const aqua::Grid& b, int margin = 0) {
    if (a.shape() != b.shape()) throw aqua::Error("psnr: shape mismatch");
    double se = 0.0;
    std::int64_t n = 0;
    for (int p = 0; p < a.planes(); ++p)
        for (int r = margin; r < a.rows() - margin; ++r)
            for (int c = margin; c < a.cols() - margin; ++c) {
                const double d = a.at(p, r, c) - b.at(p, r, c);
                se += d * d;
                ++n;
            }
    if (n == 0) throw aqua::Error("psnr: empty interior");
    const double mse = se / n;
    if (mse <= 0.0) return 200.0;
    return -10.0 * std::log10(mse);
}

/// Smooth low-frequency test image (sum of sinusoids), values in (0, 1).
inline aqua::Grid smooth_image(int channels, int rows, int cols, std::uint64_t seed,
                               double freq = 0.08) {
    aqua::Rng rng(seed);
    aqua::Grid img(aqua::Shape{channels, rows, cols});
    constexpr double kPi = 3.14159265358979323846;
    for (int ch = 0; ch < channels; ++ch) {
        double kx[4], ky[4], ph[4];
        for (int k = 0; k < 4; ++k) {
            const double f = freq * (0.25 + 0.75 * rng.uniform());
            const double th = rng.uniform(0.0, 2.0 * kPi);
            kx[k] = 2.0 * kPi * f * std::cos(th);
            ky[k] = 2.0 * kPi * f * std::sin(th);
            ph[k] = rng.uniform(0.0, 2.0 * kPi);
        }
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                double v = 0.5;
                for (int k = 0; k < 4; ++k) v += 0.12 * std::sin(kx[k] * c + ky[k] * r + ph[k]);
                img.at(ch, r, c) = v;
            }
    }
    return img;
}

} // namespace aqua_test
