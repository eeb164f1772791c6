#pragma once

#include <optional>
#include <vector>

#include "aqua/camera.hpp"
#include "aqua/grid.hpp"

namespace aqua {

/// Band-limited procedural texture: a seeded sum of sinusoids over world
/// plane coordinates. Smooth everywhere, so multi-view resampling error
/// stays small, and every view samples the same continuous signal.
class NoiseTexture {
public:
    /// `freq_max` is the highest image-space frequency (cycles/pixel) the
    /// texture should reach when seen from the frame-0 camera.
    NoiseTexture(std::uint64_t seed, double freq_max, double depth, double fx) {
        Rng rng(seed);
        const double f_world_max = freq_max * fx / depth;
        for (int ch = 0; ch < 3; ++ch)
            for (int k = 0; k < kComponents; ++k) {
                Component& c = comps_[ch][k];
                const double f = f_world_max * (0.2 + 0.8 * rng.uniform());
                const double theta = rng.uniform(0.0, 2.0 * kPi);
                c.kx = 2.0 * kPi * f * std::cos(theta);
                c.ky = 2.0 * kPi * f * std::sin(theta);
                c.phase = rng.uniform(0.0, 2.0 * kPi);
            }
    }

    double sample(int channel, double x, double y) const {
        double v = 0.5;
        for (const Component& c : comps_[channel])
            v += kAmplitude * std::sin(c.kx * x + c.ky * y + c.phase);
        return v;
    }

private:
    static constexpr int kComponents = 4;
    static constexpr double kPi = 3.14159265358979323846;
    static constexpr double kAmplitude = 0.48 / kComponents;

    struct Component {
        double kx = 0.0, ky = 0.0, phase = 0.0;
    };
    Component comps_[3][kComponents];
};

/// Axis-aligned rectangle in frame-0 pixel coordinates.
struct PixelRect {
    double u0 = 0.0, v0 = 0.0, w = 0.0, h = 0.0;
};

struct SceneLayer {
    double depth = 1.0;       ///< scene units, fronto-parallel in the frame-0 camera
    PixelRect rect;           ///< footprint as seen from frame 0
    std::uint64_t texture_seed = 1;
    double texture_freq = 0.08;
};

struct SceneMover {
    double depth = 1.0;
    PixelRect rect;            ///< frame-0 footprint at frame index 0
    double vel_u = 0.0, vel_v = 0.0;
    bool velocity_in_pixels = true; ///< else world units/frame
    std::uint64_t texture_seed = 99;
    double texture_freq = 0.08;
};

/// Procedural multi-view scene with exact ground truth. All surfaces are
/// fronto-parallel planes in the frame-0 camera frame (= world frame).
struct SceneSpec {
    CameraIntrinsics camera;
    double background_depth = 10.0;
    std::uint64_t background_seed = 7;
    double background_freq = 0.08;
    std::vector<SceneLayer> layers; ///< ordered near-to-far
    std::vector<SceneMover> movers;
    std::vector<RigidPose> poses; ///< pose per frame: X_f = R X_w + t

    void validate() const {
        camera.validate();
        if (background_depth <= 0.0) throw Error("scene: background depth must be positive");
        double prev = 0.0;
        for (const SceneLayer& l : layers) {
            if (l.depth <= 0.0) throw Error("scene: layer depth must be positive");
            if (l.depth < prev) throw Error("scene: layers must be ordered near-to-far");
            prev = l.depth;
        }
        for (const SceneMover& m : movers)
            if (m.depth <= 0.0) throw Error("scene: mover depth must be positive");
        if (poses.empty()) throw Error("scene: need at least one frame pose");
        for (const RigidPose& p : poses) p.validate();
    }
};

struct RenderResult {
    Grid image;       ///< (3, H, W) in [0, 1]
    Grid depth;       ///< (1, H, W) camera-frame depth, scene units
    Grid disparity;   ///< (1, H, W) = 1 / depth
    Grid moving_mask; ///< (1, H, W) 1 = static, 0 = mover pixel
};

namespace detail {

struct Surface {
    double z = 0.0;            // world plane depth
    double x0 = 0.0, x1 = 0.0; // world extent (infinite when unbounded)
    double y0 = 0.0, y1 = 0.0;
    bool bounded = false;
    bool moving = false;
    double tex_dx = 0.0, tex_dy = 0.0; // texture rides along with a mover
    const NoiseTexture* texture = nullptr;
};

inline void rect_to_world(const PixelRect& r, double z, const CameraIntrinsics& K, Surface& s) {
    s.x0 = (r.u0 - K.cx) / K.fx * z;
    s.x1 = (r.u0 + r.w - K.cx) / K.fx * z;
    s.y0 = (r.v0 - K.cy) / K.fy * z;
    s.y1 = (r.v0 + r.h - K.cy) / K.fy * z;
    s.bounded = true;
}

} // namespace detail

/// Exact ray-cast render of one frame: nearest surface along each pixel ray
/// wins. Ground-truth depth is the camera-frame depth of the hit point.
inline RenderResult render(const SceneSpec& spec, int frame) {
    spec.validate();
    if (frame < 0 || frame >= static_cast<int>(spec.poses.size()))
        throw Error("render: frame index out of range");
    const CameraIntrinsics& K = spec.camera;
    const RigidPose& pose = spec.poses[frame];

    std::vector<NoiseTexture> textures;
    textures.reserve(spec.layers.size() + spec.movers.size() + 1);
    std::vector<detail::Surface> surfaces;

    for (const SceneLayer& l : spec.layers) {
        textures.emplace_back(l.texture_seed, l.texture_freq, l.depth, K.fx);
        detail::Surface s;
        s.z = l.depth;
        detail::rect_to_world(l.rect, l.depth, K, s);
        surfaces.push_back(s);
    }
    for (const SceneMover& m : spec.movers) {
        textures.emplace_back(m.texture_seed, m.texture_freq, m.depth, K.fx);
        detail::Surface s;
        s.z = m.depth;
        PixelRect r = m.rect;
        const double du = m.velocity_in_pixels ? m.vel_u : m.vel_u * K.fx / m.depth;
        const double dv = m.velocity_in_pixels ? m.vel_v : m.vel_v * K.fy / m.depth;
        r.u0 += du * frame;
        r.v0 += dv * frame;
        detail::rect_to_world(r, m.depth, K, s);
        s.moving = true;
        s.tex_dx = du / K.fx * m.depth * frame;
        s.tex_dy = dv / K.fy * m.depth * frame;
        surfaces.push_back(s);
    }
    {
        textures.emplace_back(spec.background_seed, spec.background_freq, spec.background_depth,
                              K.fx);
        detail::Surface s;
        s.z = spec.background_depth;
        surfaces.push_back(s);
    }
    for (std::size_t i = 0; i < surfaces.size(); ++i) surfaces[i].texture = &textures[i];

    const Vec3 center = pose.center();
    const Mat3 rt = pose.R.transposed();
    const int H = K.height, W = K.width;
    RenderResult out{Grid(Shape{3, H, W}), Grid(Shape{1, H, W}), Grid(Shape{1, H, W}),
                     Grid(Shape{1, H, W}, 1.0)};

    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            const Vec3 dir = rt * K.ray(c, r);
            double best_lambda = 0.0;
            const detail::Surface* hit = nullptr;
            double hx = 0.0, hy = 0.0;
            for (const detail::Surface& s : surfaces) {
                if (std::abs(dir.z) < 1e-12) continue;
                const double lambda = (s.z - center.z) / dir.z;
                if (lambda <= 1e-9) continue;
                const double x = center.x + lambda * dir.x;
                const double y = center.y + lambda * dir.y;
                if (s.bounded && (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1)) continue;
                if (hit == nullptr || lambda < best_lambda) {
                    best_lambda = lambda;
                    hit = &s;
                    hx = x;
                    hy = y;
                }
            }
            if (hit == nullptr) {
                // ray escapes the scene; paint black at background depth
                out.depth.at(0, r, c) = spec.background_depth;
                out.disparity.at(0, r, c) = 1.0 / spec.background_depth;
                continue;
            }
            for (int ch = 0; ch < 3; ++ch)
                out.image.at(ch, r, c) = std::min(
                    std::max(hit->texture->sample(ch, hx - hit->tex_dx, hy - hit->tex_dy), 0.0),
                    1.0);
            out.depth.at(0, r, c) = best_lambda;
            out.disparity.at(0, r, c) = 1.0 / best_lambda;
            if (hit->moving) out.moving_mask.at(0, r, c) = 0.0;
        }
    return out;
}

/// Vertical gradient map: first row 0, last row 1, constant across columns.
inline Grid naive_disparity(int width, int height) {
    if (height < 2) throw Error("naive_disparity: height must be at least 2");
    if (width < 1) throw Error("naive_disparity: width must be at least 1");
    Grid out(Shape{1, height, width});
    for (int r = 0; r < height; ++r) {
        const double v = static_cast<double>(r) / (height - 1);
        for (int c = 0; c < width; ++c) out.at(0, r, c) = v;
    }
    return out;
}

} // namespace aqua
