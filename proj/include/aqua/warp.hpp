#pragma once

#include "aqua/camera.hpp"
#include "aqua/tape.hpp"

namespace aqua {

struct WarpCoords {
    DiffValue coords; ///< (2, H, W) source-pixel coordinates per reference pixel
    Grid front;       ///< (1, H, W) binary: 0 where the plane point falls behind a camera
};

/// Source-pixel coordinates for backward plane warping. For each reference
/// pixel q the plane at inverse depth d(q) is traced back into the target
/// camera. The map is affine in d per pixel,
///   x(q) = fx0 (px + d gx) + cx0,   y(q) = fy0 (py + d gy) + cy0,
/// so the adjoint w.r.t. d is a constant field. Pixels behind either camera
/// get far out-of-bounds coordinates and zero gradient.
inline WarpCoords plane_warp_coords(DiffValue d, const RigidPose& pose,
                                    const CameraIntrinsics& K0, const CameraIntrinsics& Kc,
                                    double eps = 1e-6) {
    Tape& t = *d.tape();
    const Grid& dv = d.value();
    const int H = Kc.height, W = Kc.width;
    if (dv.planes() != 1 || dv.rows() != H || dv.cols() != W)
        throw Error("plane_warp_coords: d must be (1, " + std::to_string(H) + ", " +
                    std::to_string(W) + "), got " + dv.shape().str());

    const Mat3 rt = pose.R.transposed();
    const Vec3 b = rt * pose.t;
    const std::size_t hw = static_cast<std::size_t>(H) * W;

    // per-pixel affine coefficients, independent of d
    Grid px(Shape{1, H, W}), py(Shape{1, H, W}), gx(Shape{1, H, W}), gy(Shape{1, H, W});
    Grid ray_ok(Shape{1, H, W});
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            const Vec3 a = rt * Kc.ray(c, r);
            const std::size_t i = static_cast<std::size_t>(r) * W + c;
            if (a.z <= eps) {
                ray_ok[i] = 0.0;
                continue;
            }
            ray_ok[i] = 1.0;
            px[i] = a.x / a.z;
            py[i] = a.y / a.z;
            gx[i] = b.z * a.x / a.z - b.x;
            gy[i] = b.z * a.y / a.z - b.y;
        }

    constexpr double kSentinel = -1e6; // far outside any source image
    Grid coords = Grid::uninit(Shape{2, H, W});
    Grid front = Grid::uninit(Shape{1, H, W});
    for (std::size_t i = 0; i < hw; ++i) {
        const double di = dv[i];
        if (ray_ok[i] == 0.0 || 1.0 + di * b.z <= eps) {
            coords[i] = kSentinel;
            coords[hw + i] = kSentinel;
            front[i] = 0.0;
            continue;
        }
        front[i] = 1.0;
        coords[i] = K0.fx * (px[i] + di * gx[i]) + K0.cx;
        coords[hw + i] = K0.fy * (py[i] + di * gy[i]) + K0.cy;
    }

    int did = d.id();
    const double fx0 = K0.fx, fy0 = K0.fy;
    Grid front_copy = front;
    auto backfn = [did, gx, gy, front_copy, fx0, fy0, hw](Tape& tt, int self) {
        const Grid& g = tt.adjoint(self);
        Grid& gd = tt.adj(did);
        for (std::size_t i = 0; i < hw; ++i) {
            if (front_copy[i] == 0.0) continue;
            gd[i] += g[i] * fx0 * gx[i] + g[hw + i] * fy0 * gy[i];
        }
    };
    DiffValue cv = t.record("plane_warp_coords", std::move(coords), backfn, {did});
    return {cv, std::move(front)};
}

struct PlaneWarp {
    DiffValue image;  ///< warped source, zero where invalid
    DiffValue coords; ///< sampling coordinates (reusable for further samples)
    Grid validity;    ///< binary: inside source and in front of both cameras
};

/// Backward plane warp: resamples `src` (target camera image) onto the
/// reference grid using the per-reference-pixel inverse depth `d`.
/// Differentiable w.r.t. both src and d.
inline PlaneWarp warp_plane(DiffValue src, DiffValue d, const RigidPose& pose,
                            const CameraIntrinsics& K0, const CameraIntrinsics& Kc) {
    WarpCoords wc = plane_warp_coords(d, pose, K0, Kc);
    BilinearSample s = bilinear_sample(src, wc.coords);
    Grid validity = s.validity;
    for (std::int64_t i = 0; i < validity.numel(); ++i)
        if (wc.front[i] == 0.0) validity[i] = 0.0;
    return {s.values, wc.coords, std::move(validity)};
}

} // namespace aqua
