#include <doctest.h>

#include "aqua/camera.hpp"
#include "aqua/scene.hpp"

using namespace aqua;

namespace {

SceneSpec flat_scene(int w = 64, int h = 48, double depth = 5.0) {
    SceneSpec s;
    s.camera.fx = s.camera.fy = 80.0;
    s.camera.cx = (w - 1) / 2.0;
    s.camera.cy = (h - 1) / 2.0;
    s.camera.width = w;
    s.camera.height = h;
    s.background_depth = depth;
    s.poses = {RigidPose::identity()};
    return s;
}

} // namespace

TEST_CASE("single plane renders constant depth") {
    SceneSpec s = flat_scene(64, 48, 5.0);
    RenderResult rr = render(s, 0);
    for (std::int64_t i = 0; i < rr.depth.numel(); ++i) {
        CHECK(rr.depth[i] == doctest::Approx(5.0).epsilon(1e-12));
        CHECK(rr.disparity[i] == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(rr.moving_mask[i] == 1.0);
    }
    for (std::int64_t i = 0; i < rr.image.numel(); ++i) {
        CHECK(rr.image[i] >= 0.0);
        CHECK(rr.image[i] <= 1.0);
    }
}

TEST_CASE("translation induces the pinhole disparity f*B/z") {
    SceneSpec s = flat_scene(64, 48, 4.0);
    const double B = 0.5;
    s.poses.push_back(RigidPose::translation(-B, 0.0, 0.0)); // camera moves +B in world x
    RenderResult f0 = render(s, 0);
    RenderResult f1 = render(s, 1);
    // the same world texture appears shifted by f*B/z pixels
    const double shift = s.camera.fx * B / 4.0;
    const int ishift = static_cast<int>(std::round(shift));
    REQUIRE(std::abs(shift - ishift) < 1e-9); // exact for this fixture
    for (int r = 4; r < 44; ++r)
        for (int c = 4; c < 60 - ishift; ++c)
            for (int ch = 0; ch < 3; ++ch)
                CHECK(f1.image.at(ch, r, c) ==
                      doctest::Approx(f0.image.at(ch, r, c + ishift)).epsilon(1e-9));
}

TEST_CASE("rendered flow matches the projection algebra on static layers") {
    SceneSpec s = flat_scene(64, 48, 6.0);
    SceneLayer layer;
    layer.depth = 3.0;
    layer.rect = {10.5, 8.5, 30.0, 20.0};
    s.layers.push_back(layer);
    RigidPose pose{Mat3::rot_y(0.015), {0.2, -0.04, 0.05}};
    s.poses.push_back(pose);
    RenderResult f0 = render(s, 0);

    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        const int c = static_cast<int>(rng.uniform(1.0, s.camera.width - 1.0));
        const int r = static_cast<int>(rng.uniform(1.0, s.camera.height - 1.0));
        const double z = f0.depth.at(0, r, c);
        PixelProjection q = plane_project(c, r, 1.0 / z, pose, s.camera, s.camera);
        REQUIRE(q.in_front);
        // direct world-point projection, written out independently
        const Vec3 x0 = s.camera.ray(c, r) * z;
        const Vec3 x1 = pose.R * x0 + pose.t;
        const double u_direct = s.camera.fx * x1.x / x1.z + s.camera.cx;
        const double v_direct = s.camera.fy * x1.y / x1.z + s.camera.cy;
        CHECK(std::abs(q.u - u_direct) < 1e-6);
        CHECK(std::abs(q.v - v_direct) < 1e-6);
    }
}

TEST_CASE("moving mask delimits the mover rectangle") {
    SceneSpec s = flat_scene(64, 48, 8.0);
    SceneMover m;
    m.depth = 4.0;
    m.rect = {20.5, 12.5, 15.0, 10.0};
    m.vel_u = 2.0;
    m.vel_v = 0.0;
    s.movers.push_back(m);
    s.poses.push_back(RigidPose::identity());

    for (int frame = 0; frame < 2; ++frame) {
        RenderResult rr = render(s, frame);
        const double u0 = m.rect.u0 + m.vel_u * frame;
        for (int r = 0; r < 48; ++r)
            for (int c = 0; c < 64; ++c) {
                const bool inside = c > u0 && c < u0 + m.rect.w && r > m.rect.v0 &&
                                    r < m.rect.v0 + m.rect.h;
                const bool outside = c < u0 - 1 || c > u0 + m.rect.w + 1 || r < m.rect.v0 - 1 ||
                                     r > m.rect.v0 + m.rect.h + 1;
                if (inside) {
                    CHECK(rr.moving_mask.at(0, r, c) == 0.0);
                    CHECK(rr.depth.at(0, r, c) == doctest::Approx(4.0));
                }
                if (outside) CHECK(rr.moving_mask.at(0, r, c) == 1.0);
            }
    }
}

TEST_CASE("a mover pacing the camera shows zero net image motion") {
    SceneSpec s = flat_scene(64, 48, 8.0);
    const double B = 0.4;
    SceneMover m;
    m.depth = 4.0;
    m.rect = {24.5, 14.5, 14.0, 10.0};
    m.vel_u = B; // world units per frame, same as the camera
    m.vel_v = 0.0;
    m.velocity_in_pixels = false;
    s.movers.push_back(m);
    s.poses.push_back(RigidPose::translation(-B, 0.0, 0.0));

    RenderResult f0 = render(s, 0);
    RenderResult f1 = render(s, 1);
    // inside the mover (with a margin) image and mask are identical across frames
    for (int r = 17; r < 23; ++r)
        for (int c = 28; c < 36; ++c) {
            REQUIRE(f0.moving_mask.at(0, r, c) == 0.0);
            CHECK(f1.moving_mask.at(0, r, c) == 0.0);
            for (int ch = 0; ch < 3; ++ch)
                CHECK(f1.image.at(ch, r, c) == doctest::Approx(f0.image.at(ch, r, c)).epsilon(1e-9));
        }
}

TEST_CASE("naive disparity ramp") {
    Grid g = naive_disparity(5, 3);
    for (int c = 0; c < 5; ++c) {
        CHECK(g.at(0, 0, c) == 0.0);
        CHECK(g.at(0, 1, c) == doctest::Approx(0.5));
        CHECK(g.at(0, 2, c) == 1.0);
    }
    CHECK_THROWS_AS(naive_disparity(5, 1), Error);
}

TEST_CASE("scene validation") {
    SceneSpec s = flat_scene();
    s.layers.push_back({3.0, {0, 0, 10, 10}, 1, 0.08});
    s.layers.push_back({2.0, {0, 0, 10, 10}, 2, 0.08}); // out of order
    CHECK_THROWS_AS(s.validate(), Error);
}
