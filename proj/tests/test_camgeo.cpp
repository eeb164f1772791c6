#include <doctest.h>

#include <cstring>

#include "aqua/camera.hpp"
#include "aqua/warp.hpp"
#include "test_util.hpp"

using namespace aqua;

namespace {

CameraIntrinsics make_camera(int w = 64, int h = 48, double f = 80.0) {
    CameraIntrinsics K;
    K.fx = K.fy = f;
    K.cx = (w - 1) / 2.0;
    K.cy = (h - 1) / 2.0;
    K.width = w;
    K.height = h;
    return K;
}

// reference bilinear interpolation, written independently of the library path
double sample_ref(const Grid& img, int ch, double x, double y) {
    const int W = img.cols(), H = img.rows();
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    auto px = [&](int xx, int yy) {
        if (xx < 0 || xx >= W || yy < 0 || yy >= H) return 0.0;
        return img.at(ch, yy, xx);
    };
    return (1 - fy) * ((1 - fx) * px(x0, y0) + fx * px(x0 + 1, y0)) +
           fy * ((1 - fx) * px(x0, y0 + 1) + fx * px(x0 + 1, y0 + 1));
}

} // namespace

TEST_CASE("plane_project basics") {
    CameraIntrinsics K = make_camera();

    SUBCASE("identity pose maps every pixel to itself at any depth") {
        for (double d : {0.0, 0.05, 0.3}) {
            PixelProjection p = plane_project(10.5, 20.25, d, RigidPose::identity(), K, K);
            CHECK(p.in_front);
            CHECK(p.u == doctest::Approx(10.5).epsilon(1e-12));
            CHECK(p.v == doctest::Approx(20.25).epsilon(1e-12));
        }
    }
    SUBCASE("pure x-translation shifts by f*B*d") {
        const double B = 0.4, d = 0.2;
        RigidPose pose = RigidPose::translation(B, 0.0, 0.0);
        PixelProjection p = plane_project(12.0, 7.0, d, pose, K, K);
        CHECK(p.u == doctest::Approx(12.0 + K.fx * B * d).epsilon(1e-12));
        CHECK(p.v == doctest::Approx(7.0));
    }
    SUBCASE("no parallax at infinite depth") {
        RigidPose pose = RigidPose::translation(1.0, -2.0, 0.5);
        PixelProjection p = plane_project(30.0, 15.0, 0.0, pose, K, K);
        CHECK(p.u == doctest::Approx(30.0));
        CHECK(p.v == doctest::Approx(15.0));
    }
    SUBCASE("points behind the camera are flagged") {
        RigidPose pose = RigidPose::translation(0.0, 0.0, -20.0);
        PixelProjection p = plane_project(10.0, 10.0, 0.3, pose, K, K);
        CHECK_FALSE(p.in_front);
    }
}

TEST_CASE("plane_project round trip through the inverse pose") {
    CameraIntrinsics K = make_camera();
    RigidPose pose{Mat3::rot_y(0.03) * Mat3::rot_z(-0.01), {0.2, -0.05, 0.04}};
    Rng rng(42);
    for (int i = 0; i < 50; ++i) {
        const double u = rng.uniform(2.0, K.width - 3.0);
        const double v = rng.uniform(2.0, K.height - 3.0);
        const double d = rng.uniform(0.02, 0.4);
        PixelProjection q = plane_project(u, v, d, pose, K, K);
        REQUIRE(q.in_front);
        // transport the inverse depth of the 3-D point into the other camera
        const Vec3 x0 = K.ray(u, v) * (1.0 / d);
        const Vec3 xc = pose.R * x0 + pose.t;
        const double dc = 1.0 / xc.z;
        PixelProjection back = plane_project(q.u, q.v, dc, pose.inverse(), K, K);
        REQUIRE(back.in_front);
        CHECK(std::abs(back.u - u) < 1e-6);
        CHECK(std::abs(back.v - v) < 1e-6);
    }
}

TEST_CASE("plane_unproject inverts plane_project") {
    CameraIntrinsics K = make_camera();
    RigidPose pose{Mat3::rot_y(-0.02), {0.15, 0.02, -0.03}};
    Rng rng(43);
    for (int i = 0; i < 50; ++i) {
        const double uq = rng.uniform(2.0, K.width - 3.0);
        const double vq = rng.uniform(2.0, K.height - 3.0);
        const double d = rng.uniform(0.02, 0.4);
        PixelProjection p0 = plane_unproject(uq, vq, d, pose, K, K);
        REQUIRE(p0.in_front);
        PixelProjection q = plane_project(p0.u, p0.v, d, pose, K, K);
        REQUIRE(q.in_front);
        CHECK(std::abs(q.u - uq) < 1e-9);
        CHECK(std::abs(q.v - vq) < 1e-9);
    }
}

TEST_CASE("warp_plane") {
    CameraIntrinsics K = make_camera();
    Grid src = aqua_test::smooth_image(3, K.height, K.width, 7);

    SUBCASE("identity pose reproduces the source") {
        Tape t;
        PlaneWarp w = warp_plane(t.input(src), t.input(Grid(Shape{1, K.height, K.width}, 0.17)),
                                 RigidPose::identity(), K, K);
        for (std::int64_t i = 0; i < src.numel(); ++i)
            CHECK(std::abs(w.image.value()[i] - src[i]) < 1e-9);
        for (std::int64_t i = 0; i < w.validity.numel(); ++i) CHECK(w.validity[i] == 1.0);
    }
    SUBCASE("constant depth and pure x-translation is a horizontal shift") {
        const double B = 0.5, d = 0.2;
        const double shift = K.fx * B * d; // source x = target x - shift for t = (B, 0, 0)
        Tape t;
        PlaneWarp w = warp_plane(t.input(src), t.input(Grid(Shape{1, K.height, K.width}, d)),
                                 RigidPose::translation(B, 0.0, 0.0), K, K);
        Grid oracle(src.shape());
        for (int ch = 0; ch < 3; ++ch)
            for (int r = 0; r < K.height; ++r)
                for (int c = 0; c < K.width; ++c)
                    oracle.at(ch, r, c) = sample_ref(src, ch, c - shift, r);
        const int margin = static_cast<int>(std::ceil(shift)) + 1;
        CHECK(aqua_test::psnr(w.image.value(), oracle, margin) > 40.0);
    }
    SUBCASE("zero inverse depth ignores translation") {
        Tape t;
        PlaneWarp w = warp_plane(t.input(src), t.input(Grid(Shape{1, K.height, K.width}, 0.0)),
                                 RigidPose::translation(2.0, 1.0, 0.0), K, K);
        for (std::int64_t i = 0; i < src.numel(); ++i)
            CHECK(std::abs(w.image.value()[i] - src[i]) < 1e-9);
    }
}

TEST_CASE("apply_augmentation") {
    CameraIntrinsics K = make_camera(128, 96, 110.0);
    RigidPose pose = RigidPose::translation(0.1, 0.0, 0.0);

    SUBCASE("unit scale with no crop is a no-op") {
        AugmentationSpec spec;
        spec.scale = 1.0;
        auto [K2, p2] = apply_augmentation(spec, K, pose);
        CHECK(K2.fx == K.fx);
        CHECK(K2.cx == K.cx);
        CHECK(K2.width == K.width);
        CHECK(p2.t.x == pose.t.x);
    }
    SUBCASE("direct mode divides the translation by the scale") {
        AugmentationSpec spec;
        spec.scale = 2.0;
        spec.mode = AugmentationSpec::TranslationMode::direct;
        auto [K2, p2] = apply_augmentation(spec, K, pose);
        CHECK(K2.fx == doctest::Approx(2.0 * K.fx));
        CHECK(p2.t.x == doctest::Approx(0.05));
    }
    SUBCASE("invariant mode keeps the translation bit-identical") {
        AugmentationSpec spec;
        spec.scale = 1.25;
        spec.mode = AugmentationSpec::TranslationMode::invariant;
        auto [K2, p2] = apply_augmentation(spec, K, pose);
        CHECK(std::memcmp(&p2.t, &pose.t, sizeof(Vec3)) == 0);
    }
    SUBCASE("crop must stay inside the scaled image") {
        AugmentationSpec spec;
        spec.scale = 0.5;
        spec.crop_u0 = 60.0;
        spec.crop_v0 = 0.0;
        spec.crop_w = 10;
        spec.crop_h = 10;
        CHECK_THROWS_AS(apply_augmentation(spec, K, pose), Error);
    }
    SUBCASE("crop shifts the principal point") {
        AugmentationSpec spec;
        spec.scale = 1.0;
        spec.crop_u0 = 8.0;
        spec.crop_v0 = 4.0;
        spec.crop_w = 32;
        spec.crop_h = 24;
        auto [K2, p2] = apply_augmentation(spec, K, pose);
        CHECK(K2.cx == doctest::Approx(K.cx - 8.0));
        CHECK(K2.cy == doctest::Approx(K.cy - 4.0));
        CHECK(K2.width == 32);
        CHECK(K2.height == 24);
    }
}

TEST_CASE("augmentation modes rescale the recoverable disparity field") {
    // The observable pixel correspondence of a fixed scene is resize-invariant
    // evidence; each mode changes the normalized disparity that explains it.
    CameraIntrinsics K = make_camera(128, 96, 110.0);
    const double B = 0.3;
    RigidPose pose = RigidPose::translation(-B, 0.0, 0.0);
    Rng rng(5);

    for (double s : {0.5, 0.75, 1.25, 1.5, 2.0}) {
        for (int i = 0; i < 20; ++i) {
            const double u = rng.uniform(5.0, K.width - 6.0);
            const double v = rng.uniform(5.0, K.height - 6.0);
            const double d = rng.uniform(0.05, 0.35);
            PixelProjection q = plane_project(u, v, d, pose, K, K);
            REQUIRE(q.in_front);
            // the same correspondence seen in the resized images
            const double us = s * u, qs = s * q.u;

            for (auto mode : {AugmentationSpec::TranslationMode::direct,
                              AugmentationSpec::TranslationMode::inverse,
                              AugmentationSpec::TranslationMode::invariant}) {
                AugmentationSpec spec;
                spec.scale = s;
                spec.mode = mode;
                auto [K2, p2] = apply_augmentation(spec, K, pose);
                // solve the pure-translation projection for the disparity that
                // reproduces the resized correspondence: shift = fx' * t'x * d'
                const double recovered = (qs - us) / (K2.fx * p2.t.x);
                double expect = d;
                if (mode == AugmentationSpec::TranslationMode::direct) expect = s * d;
                if (mode == AugmentationSpec::TranslationMode::inverse) expect = d / s;
                CHECK(std::abs(recovered - expect) < 1e-9);
            }
        }
    }
}
