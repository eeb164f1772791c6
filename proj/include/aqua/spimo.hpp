#pragma once

#include <functional>
#include <vector>

#include "aqua/synthesis.hpp"

namespace aqua {

/// First-stage depth model abstracted as a callable: (image, positional
/// offset) -> positive disparity map. Offsets are in normalized coordinates
/// with the image center at (0,0) and the top-left corner at (-1,-1).
using DisparityEstimator = std::function<Grid(const Grid& image, double off_u, double off_v)>;

/// Positional perturbations used to build the perturbed depth volume.
struct SpimoOffsets {
    std::vector<double> u;
    std::vector<double> v;

    static SpimoOffsets defaults() { return {{0.0, 0.5, -0.5, 0.0}, {0.0, 0.0, 0.0, -0.25}}; }

    std::size_t count() const { return u.size(); }
    void validate() const {
        if (u.size() != v.size()) throw Error("spimo offsets: u and v lengths differ");
        if (u.size() < 2) throw Error("spimo offsets: need at least 2 offsets");
    }
};

/// Perturbed depth volume: channel i holds the inverse of the disparity
/// estimate under positional offset (u_i, v_i). Depth units make the
/// dispersion between near and far estimates more pronounced.
inline Grid build_depth_volume(const DisparityEstimator& estimator, const Grid& image,
                               const SpimoOffsets& offsets) {
    offsets.validate();
    const int N = static_cast<int>(offsets.count());
    Grid volume;
    for (int i = 0; i < N; ++i) {
        Grid disp = estimator(image, offsets.u[i], offsets.v[i]);
        if (disp.planes() != 1) throw Error("spimo: estimator must return a single-plane map");
        if (i == 0) volume = Grid(Shape{N, disp.rows(), disp.cols()});
        if (disp.rows() != volume.rows() || disp.cols() != volume.cols())
            throw Error("spimo: estimator output size changed between offsets");
        const std::size_t hw = static_cast<std::size_t>(disp.rows()) * disp.cols();
        for (std::size_t p = 0; p < hw; ++p) {
            if (disp[p] <= 0.0) throw Error("spimo: estimator returned non-positive depth");
            volume[i * hw + p] = 1.0 / disp[p];
        }
    }
    return volume;
}

/// Static-pixel mask from the normalized channel-wise variance of the depth
/// volume (index-of-dispersion style):
///   s^2 = sum_i (D_i - mean)^2 / (mean^2 (N-1)),   M = 1 if s^2 < gamma.
/// 1 = static (kept by the losses), 0 = likely independently moving.
inline Grid compute_spimo_mask(const Grid& depth_volume, double gamma = 0.03) {
    const int N = depth_volume.planes();
    if (N < 2) throw Error("spimo: need at least 2 depth channels");
    const std::size_t hw = static_cast<std::size_t>(depth_volume.rows()) * depth_volume.cols();
    Grid mask(Shape{1, depth_volume.rows(), depth_volume.cols()});
    for (std::size_t p = 0; p < hw; ++p) {
        double mean = 0.0;
        for (int i = 0; i < N; ++i) mean += depth_volume[i * hw + p];
        mean /= N;
        if (mean < 1e-12) throw Error("spimo: degenerate depth");
        double ss = 0.0;
        for (int i = 0; i < N; ++i) {
            const double dev = depth_volume[i * hw + p] - mean;
            ss += dev * dev;
        }
        const double s2 = ss / (mean * mean * (N - 1));
        mask[p] = s2 < gamma ? 1.0 : 0.0;
    }
    return mask;
}

/// Projects the target frame's mask into a reference camera through the
/// probabilistic warp and rebinarizes at 0.5. Out-of-frame and low-mass
/// regions fall below the threshold, so unknown content stays excluded.
inline Grid project_spimo_mask(const Grid& mask, const Grid& logits, const Grid& levels,
                               const RigidPose& pose, const CameraIntrinsics& K0,
                               const CameraIntrinsics& Kc) {
    Tape t;
    SynthesisResult s = synthesize_view(t.constant(mask), t.constant(logits),
                                        t.constant(levels), pose, K0, Kc);
    const Grid& warped = s.image.value();
    Grid out(warped.shape());
    for (std::int64_t i = 0; i < warped.numel(); ++i) out[i] = warped[i] >= 0.5 ? 1.0 : 0.0;
    return out;
}

} // namespace aqua
