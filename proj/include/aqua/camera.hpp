#pragma once

#include <array>
#include <cmath>
#include <string>

#include "aqua/grid.hpp"

namespace aqua {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

/// 3x3 matrix, row-major.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return Mat3{}; }

    double at(int r, int c) const { return m[r * 3 + c]; }
    double& at(int r, int c) { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
        return r;
    }
    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    /// Rotation about the y axis (radians); convenient for test scenes.
    static Mat3 rot_y(double a) {
        Mat3 r;
        r.m = {std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a)};
        return r;
    }
    static Mat3 rot_z(double a) {
        Mat3 r;
        r.m = {std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1};
        return r;
    }
};

/// Pinhole intrinsics. Pixel centers sit at integer coordinates.
struct CameraIntrinsics {
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;

    void validate() const {
        if (fx <= 0.0 || fy <= 0.0) throw Error("intrinsics: focal lengths must be positive");
        if (width < 2 || height < 2) throw Error("intrinsics: image size must be at least 2x2");
    }

    /// Unit-z ray through pixel (u, v).
    Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
};

/// Rigid transform taking target-camera (camera 0) coordinates to a
/// reference camera c: X_c = R X_0 + t. Translation units set the scene
/// scale; inverse depths are expressed against the same units.
struct RigidPose {
    Mat3 R;
    Vec3 t;

    void validate(double tol = 1e-9) const {
        Mat3 rrt = R * R.transposed();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double want = i == j ? 1.0 : 0.0;
                if (std::abs(rrt.at(i, j) - want) > tol)
                    throw Error("pose: R is not orthonormal");
            }
        if (std::abs(R.det() - 1.0) > tol) throw Error("pose: det(R) != 1");
    }

    static RigidPose identity() { return RigidPose{Mat3::identity(), {0, 0, 0}}; }
    static RigidPose translation(double x, double y, double z) {
        return RigidPose{Mat3::identity(), {x, y, z}};
    }

    RigidPose inverse() const {
        Mat3 rt = R.transposed();
        Vec3 ti = rt * t;
        return RigidPose{rt, {-ti.x, -ti.y, -ti.z}};
    }
    /// Composition: (*this) after `o`, i.e. X -> R (R_o X + t_o) + t.
    RigidPose compose(const RigidPose& o) const {
        return RigidPose{R * o.R, R * o.t + t};
    }
    /// Camera center in target coordinates.
    Vec3 center() const {
        Vec3 c = R.transposed() * t;
        return {-c.x, -c.y, -c.z};
    }
};

struct PixelProjection {
    double u = 0.0, v = 0.0;
    bool in_front = false; ///< projective depth above epsilon
};

/// Projects target pixel p0 lying on the inverse-depth-d plane into camera c:
/// p_c ~ Kc (R K0^-1 p0~ + d t). Exact for points on the plane Z = 1/d.
inline PixelProjection plane_project(double u0, double v0, double d, const RigidPose& pose,
                                     const CameraIntrinsics& K0, const CameraIntrinsics& Kc,
                                     double eps = 1e-6) {
    if (d < 0.0) throw Error("plane_project: negative inverse depth");
    Vec3 r = K0.ray(u0, v0);
    Vec3 w = pose.R * r + pose.t * d;
    PixelProjection out;
    out.in_front = w.z > eps;
    if (!out.in_front) return out;
    out.u = Kc.fx * (w.x / w.z) + Kc.cx;
    out.v = Kc.fy * (w.y / w.z) + Kc.cy;
    return out;
}

/// Inverse of plane_project for backward warping: which target pixel feeds
/// reference pixel q, given the plane's inverse depth d (evaluated on the
/// reference grid)? Derived from lambda m = R r + d t with r_z = 1:
///   r = lambda a - d b,  a = R^T m,  b = R^T t,  lambda = (1 + d b_z) / a_z.
inline PixelProjection plane_unproject(double uq, double vq, double d, const RigidPose& pose,
                                       const CameraIntrinsics& K0, const CameraIntrinsics& Kc,
                                       double eps = 1e-6) {
    Vec3 m = Kc.ray(uq, vq);
    Mat3 rt = pose.R.transposed();
    Vec3 a = rt * m;
    Vec3 b = rt * pose.t;
    PixelProjection out;
    double lam_num = 1.0 + d * b.z;
    if (a.z <= eps || lam_num <= eps) return out; // behind either camera
    double lam = lam_num / a.z;
    Vec3 r = a * lam - b * d;
    out.u = K0.fx * r.x + K0.cx;
    out.v = K0.fy * r.y + K0.cy;
    out.in_front = true;
    return out;
}

/// Resize-and-crop augmentation. The crop window is expressed in scaled
/// image pixels and must lie inside the scaled image. Composition order is
/// fixed: scale first, then crop.
struct AugmentationSpec {
    double scale = 1.0;
    double crop_u0 = 0.0, crop_v0 = 0.0;
    int crop_w = 0, crop_h = 0; ///< 0 = keep full scaled size
    enum class TranslationMode { invariant, inverse, direct };
    TranslationMode mode = TranslationMode::direct;

    void validate(const CameraIntrinsics& K) const {
        if (scale <= 0.0) throw Error("augmentation: scale must be positive");
        const double sw = K.width * scale, sh = K.height * scale;
        const double w = crop_w > 0 ? crop_w : sw;
        const double h = crop_h > 0 ? crop_h : sh;
        if (crop_u0 < 0 || crop_v0 < 0 || crop_u0 + w > sw + 1e-9 || crop_v0 + h > sh + 1e-9)
            throw Error("augmentation: crop window outside the scaled image");
    }
};

inline AugmentationSpec::TranslationMode translation_mode_from_string(const std::string& s) {
    if (s == "invariant") return AugmentationSpec::TranslationMode::invariant;
    if (s == "inverse") return AugmentationSpec::TranslationMode::inverse;
    if (s == "direct") return AugmentationSpec::TranslationMode::direct;
    throw Error("augmentation: unknown translation mode '" + s + "'");
}

inline std::string to_string(AugmentationSpec::TranslationMode m) {
    switch (m) {
    case AugmentationSpec::TranslationMode::invariant: return "invariant";
    case AugmentationSpec::TranslationMode::inverse: return "inverse";
    default: return "direct";
    }
}

/// Applies resize/crop to the intrinsics and rescales the camera translation
/// per mode. Direct mode divides t by the scale so that a model explaining
/// the same scene must emit disparities proportional to resolution; inverse
/// multiplies; invariant leaves t untouched.
inline std::pair<CameraIntrinsics, RigidPose> apply_augmentation(const AugmentationSpec& spec,
                                                                 const CameraIntrinsics& K,
                                                                 const RigidPose& pose) {
    spec.validate(K);
    CameraIntrinsics K2 = K;
    K2.fx = K.fx * spec.scale;
    K2.fy = K.fy * spec.scale;
    K2.cx = K.cx * spec.scale - spec.crop_u0;
    K2.cy = K.cy * spec.scale - spec.crop_v0;
    K2.width = spec.crop_w > 0 ? spec.crop_w : static_cast<int>(std::lround(K.width * spec.scale));
    K2.height =
        spec.crop_h > 0 ? spec.crop_h : static_cast<int>(std::lround(K.height * spec.scale));

    RigidPose p2 = pose;
    switch (spec.mode) {
    case AugmentationSpec::TranslationMode::invariant: break;
    case AugmentationSpec::TranslationMode::inverse: p2.t = pose.t * spec.scale; break;
    case AugmentationSpec::TranslationMode::direct: p2.t = pose.t * (1.0 / spec.scale); break;
    }
    return {K2, p2};
}

} // namespace aqua
