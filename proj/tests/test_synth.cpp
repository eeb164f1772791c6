#include <doctest.h>

#include "aqua/synthesis.hpp"
#include "test_util.hpp"

using namespace aqua;

namespace {

CameraIntrinsics make_camera(int w = 48, int h = 36, double f = 60.0) {
    CameraIntrinsics K;
    K.fx = K.fy = f;
    K.cx = (w - 1) / 2.0;
    K.cy = (h - 1) / 2.0;
    K.width = w;
    K.height = h;
    return K;
}

} // namespace

TEST_CASE("projected probability volume") {
    CameraIntrinsics K = make_camera();
    QuantizationConfig cfg{4, 0.05, 0.3};

    SUBCASE("identity pose reduces to a plain channel softmax") {
        Rng rng(3);
        Grid logits = rng.uniform_grid(Shape{4, K.height, K.width}, -2.0, 2.0);
        Tape t;
        DiffValue lv = quantization_levels(cfg, t.input(Grid(Shape{1, K.height, K.width}, 1.0)));
        DiffValue projected =
            project_probability_volume(t.input(logits), lv, RigidPose::identity(), K, K);
        DiffValue direct = channel_softmax(t.input(logits));
        for (std::int64_t i = 0; i < projected.value().numel(); ++i)
            CHECK(std::abs(projected.value()[i] - direct.value()[i]) < 1e-9);
    }
    SUBCASE("uniform logits under translation stay uniform where valid") {
        Tape t;
        Grid levels(Shape{2, K.height, K.width});
        const std::size_t hw = static_cast<std::size_t>(K.height) * K.width;
        for (std::size_t i = 0; i < hw; ++i) {
            levels[i] = 0.1;
            levels[hw + i] = 0.1; // both planes at the same depth: both warps valid together
        }
        RigidPose pose = RigidPose::translation(-0.4, 0.0, 0.0);
        DiffValue pv = project_probability_volume(t.input(Grid(Shape{2, K.height, K.width}, 0.3)),
                                                  t.input(levels), pose, K, K);
        const double shift = K.fx * 0.4 * 0.1;
        for (int r = 0; r < K.height; ++r)
            for (int c = 0; c < K.width - 1 - static_cast<int>(std::ceil(shift)) - 1; ++c) {
                CHECK(pv.value().at(0, r, c) == doctest::Approx(0.5).epsilon(1e-9));
                CHECK(pv.value().at(1, r, c) == doctest::Approx(0.5).epsilon(1e-9));
            }
    }
    SUBCASE("one-hot mass moves with its plane's disparity") {
        const double d0 = 0.2, B = 0.5;
        Tape t;
        Grid levels(Shape{2, K.height, K.width});
        const std::size_t hw = static_cast<std::size_t>(K.height) * K.width;
        for (std::size_t i = 0; i < hw; ++i) {
            levels[i] = d0;
            levels[hw + i] = 0.4;
        }
        Grid logits(Shape{2, K.height, K.width}, 0.0);
        for (std::size_t i = 0; i < hw; ++i) logits[i] = 50.0; // channel 0 one-hot
        RigidPose pose = RigidPose::translation(-B, 0.0, 0.0);
        DiffValue pv =
            project_probability_volume(t.input(logits), t.input(levels), pose, K, K);
        // t = (-B, 0, 0) samples the source at x + f*B*d, so validity ends at
        // the right edge; where channel 0's warp stays inside, it keeps all mass
        const double shift = K.fx * B * d0;
        for (int r = 0; r < K.height; ++r)
            for (int c = 0; c < K.width - 1 - static_cast<int>(std::ceil(shift)) - 1; ++c)
                CHECK(pv.value().at(0, r, c) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("logits are warped before the softmax, not after") {
        // the alternative (warping probabilities) differs once planes move apart
        Rng rng(4);
        Grid logits = rng.uniform_grid(Shape{4, K.height, K.width}, -2.0, 2.0);
        RigidPose pose = RigidPose::translation(-0.6, 0.0, 0.0);
        Tape t;
        DiffValue beta = t.input(Grid(Shape{1, K.height, K.width}, 1.0));
        DiffValue lv = quantization_levels(cfg, beta);
        DiffValue ours = project_probability_volume(t.input(logits), lv, pose, K, K);

        DiffValue probs_first = channel_softmax(t.input(logits));
        std::vector<DiffValue> warped;
        for (int n = 0; n < 4; ++n) {
            PlaneWarp w = warp_plane(slice_plane(probs_first, n), slice_plane(lv, n), pose, K, K);
            warped.push_back(w.image);
        }
        DiffValue alt = concat_planes(warped);
        double max_diff = 0.0;
        for (std::int64_t i = 0; i < ours.value().numel(); ++i)
            max_diff = std::max(max_diff, std::abs(ours.value()[i] - alt.value()[i]));
        CHECK(max_diff > 1e-3);
    }
}

TEST_CASE("synthesize_view") {
    CameraIntrinsics K = make_camera();
    QuantizationConfig cfg{5, 0.05, 0.4};
    Grid image = aqua_test::smooth_image(3, K.height, K.width, 11);

    SUBCASE("identity pose reproduces the input exactly") {
        Rng rng(6);
        Grid logits = rng.uniform_grid(Shape{5, K.height, K.width}, -2.0, 2.0);
        Tape t;
        DiffValue lv = quantization_levels(
            cfg, t.input(rng.uniform_grid(Shape{1, K.height, K.width}, 0.5, 2.0)));
        SynthesisResult s =
            synthesize_view(t.input(image), t.input(logits), lv, RigidPose::identity(), K, K);
        for (std::int64_t i = 0; i < image.numel(); ++i)
            CHECK(std::abs(s.image.value()[i] - image[i]) <= 1e-6);
        for (std::int64_t i = 0; i < s.occlusion.numel(); ++i) CHECK(s.occlusion[i] == 1.0);
    }
    SUBCASE("probability volume at the target sums to one") {
        Rng rng(7);
        Grid logits = rng.uniform_grid(Shape{5, K.height, K.width}, -2.0, 2.0);
        Tape t;
        DiffValue probs = channel_softmax(t.input(logits));
        const std::size_t hw = static_cast<std::size_t>(K.height) * K.width;
        for (std::size_t px = 0; px < hw; ++px) {
            double sum = 0.0;
            for (int n = 0; n < 5; ++n) sum += probs.value()[n * hw + px];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
    SUBCASE("mass never exceeds one") {
        Rng rng(8);
        Grid logits = rng.uniform_grid(Shape{5, K.height, K.width}, -2.0, 2.0);
        Tape t;
        DiffValue lv = quantization_levels(
            cfg, t.input(rng.uniform_grid(Shape{1, K.height, K.width}, 0.5, 2.0)));
        SynthesisResult s = synthesize_view(t.input(image), t.input(logits), lv,
                                            RigidPose::translation(-0.4, 0.05, 0.0), K, K);
        for (std::int64_t i = 0; i < s.mass.value().numel(); ++i)
            CHECK(s.mass.value()[i] <= 1.0 + 1e-6);
    }
    SUBCASE("pure rotation matches the homography warp for any logits") {
        Rng rng(9);
        Grid logits = rng.uniform_grid(Shape{5, K.height, K.width}, -2.0, 2.0);
        RigidPose pose{Mat3::rot_y(0.02), {0.0, 0.0, 0.0}};
        Tape t;
        DiffValue lv = quantization_levels(
            cfg, t.input(rng.uniform_grid(Shape{1, K.height, K.width}, 0.5, 2.0)));
        SynthesisResult s = synthesize_view(t.input(image), t.input(logits), lv, pose, K, K);

        // oracle: rotation-only homography resample of the image
        Grid oracle(image.shape());
        Mat3 rt = pose.R.transposed();
        for (int r = 0; r < K.height; ++r)
            for (int c = 0; c < K.width; ++c) {
                Vec3 m = rt * K.ray(c, r);
                const double x = K.fx * m.x / m.z + K.cx;
                const double y = K.fy * m.y / m.z + K.cy;
                for (int ch = 0; ch < 3; ++ch) {
                    const int x0 = static_cast<int>(std::floor(x)),
                              y0 = static_cast<int>(std::floor(y));
                    const double fx = x - x0, fy = y - y0;
                    auto px = [&](int xx, int yy) {
                        if (xx < 0 || xx >= K.width || yy < 0 || yy >= K.height) return 0.0;
                        return image.at(ch, yy, xx);
                    };
                    oracle.at(ch, r, c) = (1 - fy) * ((1 - fx) * px(x0, y0) + fx * px(x0 + 1, y0)) +
                                          fy * ((1 - fx) * px(x0, y0 + 1) + fx * px(x0 + 1, y0 + 1));
                }
            }
        CHECK(aqua_test::psnr(s.image.value(), oracle, 4) > 40.0);
    }
}

TEST_CASE("occlusion mask") {
    CameraIntrinsics K = make_camera();

    SUBCASE("identity pose keeps everything visible") {
        Rng rng(10);
        Grid logits = rng.uniform_grid(Shape{3, K.height, K.width}, -1.0, 1.0);
        Grid levels(Shape{3, K.height, K.width});
        const std::size_t hw = static_cast<std::size_t>(K.height) * K.width;
        for (std::size_t i = 0; i < hw; ++i) {
            levels[i] = 0.05;
            levels[hw + i] = 0.1;
            levels[2 * hw + i] = 0.2;
        }
        Tape t;
        SynthesisResult s = synthesize_view(t.input(aqua_test::smooth_image(3, K.height, K.width, 2)),
                                            t.input(logits), t.input(levels),
                                            RigidPose::identity(), K, K);
        for (std::int64_t i = 0; i < s.occlusion.numel(); ++i) CHECK(s.occlusion[i] == 1.0);
    }
    SUBCASE("translation vacates a border strip of width f*B*d") {
        const double d0 = 0.25, B = 0.6;
        const double strip = K.fx * B * d0;
        Grid logits(Shape{2, K.height, K.width}, 0.0);
        Grid levels(Shape{2, K.height, K.width});
        const std::size_t hw = static_cast<std::size_t>(K.height) * K.width;
        for (std::size_t i = 0; i < hw; ++i) {
            logits[i] = 50.0;
            levels[i] = d0;
            levels[hw + i] = 0.4;
        }
        Tape t;
        // t = (-B, 0, 0): the source columns feeding the right edge fall outside
        SynthesisResult s = synthesize_view(t.input(aqua_test::smooth_image(3, K.height, K.width, 2)),
                                            t.input(logits), t.input(levels),
                                            RigidPose::translation(-B, 0.0, 0.0), K, K);
        for (int r = 0; r < K.height; ++r) {
            for (int c = 0; c < K.width; ++c) {
                const double expected_occluded = c > K.width - 1 - strip + 1;
                const double expected_visible = c < K.width - 1 - strip - 1;
                if (expected_occluded) CHECK(s.occlusion.at(0, r, c) == 0.0);
                if (expected_visible) CHECK(s.occlusion.at(0, r, c) == 1.0);
            }
        }
    }
    SUBCASE("zero threshold keeps everything") {
        Grid mass(Shape{1, 4, 4}, 0.0);
        Grid m = occlusion_mask(mass, 0.0);
        for (std::int64_t i = 0; i < m.numel(); ++i) CHECK(m[i] == 1.0);
    }
}
