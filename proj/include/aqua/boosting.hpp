#pragma once

#include "aqua/resize.hpp"
#include "aqua/spimo.hpp"

namespace aqua {

/// Disparity estimates at full, reduced (3/4) and augmented (5/4) scales,
/// all resampled back to full resolution with disparity values rescaled by
/// the inverse resize factor (disparities scale with resolution).
struct BoostTriple {
    Grid full;
    Grid down;
    Grid up;
};

/// Runs the estimator at the three scales. The reduced pass sees the image at
/// 3/4 size and its output is resized back up by 4/3 and multiplied by 4/3;
/// the augmented pass mirrors this with 5/4 and 4/5.
inline BoostTriple make_boost_triple(const DisparityEstimator& estimator, const Grid& image) {
    const int H = image.rows(), W = image.cols();
    BoostTriple t;
    t.full = estimator(image, 0.0, 0.0);

    Grid down_in = resize_bilinear(image, 0.75);
    Grid down_est = estimator(down_in, 0.0, 0.0);
    t.down = resize_bilinear(down_est, H, W);
    for (std::int64_t i = 0; i < t.down.numel(); ++i) t.down[i] *= 4.0 / 3.0;

    Grid up_in = resize_bilinear(image, 1.25);
    Grid up_est = estimator(up_in, 0.0, 0.0);
    t.up = resize_bilinear(up_est, H, W);
    for (std::int64_t i = 0; i < t.up.numel(); ++i) t.up[i] *= 4.0 / 5.0;

    if (t.full.shape() != t.down.shape() || t.full.shape() != t.up.shape())
        throw Error("boost: triple shapes disagree");
    return t;
}

/// Selective blend of the triple. With Dm the per-pixel sum normalized by its
/// global max (so Dm lies in (0, 1]), the blend is
///   D* = (full + Dm*down + (1 - Dm^2)*up) / (1 + Dm + (1 - Dm^2)).
/// Near objects (Dm -> 1) trust the downscaled pass, far objects (Dm -> 0)
/// the upscaled pass. The denominator matches the numerator weight sum so
/// identical inputs are a fixed point; `literal_denominator` selects the
/// uncorrected variant (1 + Dm + (1 + Dm^2)) kept for auditability.
inline Grid blend_boosted(const BoostTriple& t, bool literal_denominator = false) {
    const std::int64_t n = t.full.numel();
    Grid sum(t.full.shape());
    double smax = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        sum[i] = t.full[i] + t.down[i] + t.up[i];
        smax = std::max(smax, sum[i]);
    }
    if (smax < 1e-12) throw Error("boost: degenerate disparity");
    Grid out(t.full.shape());
    for (std::int64_t i = 0; i < n; ++i) {
        const double dm = sum[i] / smax;
        const double w_up = 1.0 - dm * dm;
        if (literal_denominator) {
            out[i] = (t.full[i] + dm * t.down[i] + w_up * t.up[i]) /
                     (1.0 + dm + (1.0 + dm * dm));
        } else {
            // residual form of (full + dm*down + w_up*up) / (1 + dm + w_up):
            // identical inputs cancel before any rounding, so the fixed point
            // blend(D, D, D) = D holds exactly
            const double den = 1.0 + dm + w_up;
            out[i] = t.full[i] +
                     (dm * (t.down[i] - t.full[i]) + w_up * (t.up[i] - t.full[i])) / den;
        }
    }
    return out;
}

} // namespace aqua
