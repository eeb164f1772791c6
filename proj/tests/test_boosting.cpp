#include <doctest.h>

#include "aqua/boosting.hpp"
#include "test_util.hpp"

using namespace aqua;

TEST_CASE("make_boost_triple") {
    SUBCASE("scale-equivariant estimator yields three identical maps") {
        // disparities already proportional to resolution: c * (h / 96)
        DisparityEstimator est = [](const Grid& img, double, double) {
            return Grid(Shape{1, img.rows(), img.cols()}, 0.12 * img.rows() / 96.0);
        };
        Grid image = aqua_test::smooth_image(3, 96, 128, 5);
        BoostTriple t = make_boost_triple(est, image);
        for (std::int64_t i = 0; i < t.full.numel(); ++i) {
            CHECK(t.down[i] == doctest::Approx(t.full[i]).epsilon(1e-9));
            CHECK(t.up[i] == doctest::Approx(t.full[i]).epsilon(1e-9));
        }
    }
    SUBCASE("constant estimator exposes the rescale factors") {
        DisparityEstimator est = [](const Grid& img, double, double) {
            return Grid(Shape{1, img.rows(), img.cols()}, 0.3);
        };
        Grid image = aqua_test::smooth_image(3, 48, 64, 6);
        BoostTriple t = make_boost_triple(est, image);
        for (std::int64_t i = 0; i < t.full.numel(); ++i) {
            CHECK(t.full[i] == doctest::Approx(0.3));
            CHECK(t.down[i] == doctest::Approx(0.3 * 4.0 / 3.0));
            CHECK(t.up[i] == doctest::Approx(0.3 * 4.0 / 5.0));
        }
    }
    SUBCASE("intermediate sizes follow the resize factors") {
        std::vector<Shape> seen;
        DisparityEstimator est = [&seen](const Grid& img, double, double) {
            seen.push_back(img.shape());
            return Grid(Shape{1, img.rows(), img.cols()}, 0.2);
        };
        Grid image = aqua_test::smooth_image(3, 96, 128, 7);
        make_boost_triple(est, image);
        REQUIRE(seen.size() == 3);
        CHECK(seen[0] == Shape{3, 96, 128});
        CHECK(seen[1] == Shape{3, 72, 96});
        CHECK(seen[2] == Shape{3, 120, 160});
    }
}

TEST_CASE("blend_boosted") {
    SUBCASE("identical inputs are a fixed point, elementwise exact") {
        Rng rng(8);
        Grid d = rng.uniform_grid(Shape{1, 10, 14}, 0.02, 0.4);
        Grid out = blend_boosted({d, d, d});
        for (std::int64_t i = 0; i < d.numel(); ++i) CHECK(out[i] == d[i]);
    }
    SUBCASE("the literal denominator is not a fixed point") {
        Rng rng(9);
        Grid d = rng.uniform_grid(Shape{1, 10, 14}, 0.02, 0.4);
        Grid out = blend_boosted({d, d, d}, /*literal_denominator=*/true);
        double max_diff = 0.0;
        for (std::int64_t i = 0; i < d.numel(); ++i)
            max_diff = std::max(max_diff, std::abs(out[i] - d[i]));
        CHECK(max_diff > 1e-3);
    }
    SUBCASE("stays within the per-pixel min/max of the triple") {
        Rng rng(10);
        for (int trial = 0; trial < 1000; ++trial) {
            Grid f = rng.uniform_grid(Shape{1, 3, 4}, 0.01, 0.5);
            Grid d = rng.uniform_grid(Shape{1, 3, 4}, 0.01, 0.5);
            Grid u = rng.uniform_grid(Shape{1, 3, 4}, 0.01, 0.5);
            Grid out = blend_boosted({f, d, u});
            for (std::int64_t i = 0; i < out.numel(); ++i) {
                const double lo = std::min({f[i], d[i], u[i]});
                const double hi = std::max({f[i], d[i], u[i]});
                CHECK(out[i] >= lo - 1e-12);
                CHECK(out[i] <= hi + 1e-12);
            }
        }
    }
    SUBCASE("weight limits: near pixels trust the reduced pass, far the augmented") {
        // at the global max (Dm = 1) the augmented weight vanishes
        Grid f(Shape{1, 1, 2});
        Grid d(Shape{1, 1, 2});
        Grid u(Shape{1, 1, 2});
        f[0] = 0.4; d[0] = 0.2; u[0] = 0.9;   // this pixel holds the max sum
        f[1] = 0.004; d[1] = 0.002; u[1] = 0.009;
        Grid out = blend_boosted({f, d, u});
        CHECK(out[0] == doctest::Approx((0.4 + 0.2) / 2.0));
        // sum ratio of pixel 1 is 1/100, so Dm ~ 0.01: nearly (full + up) / 2
        CHECK(out[1] == doctest::Approx((0.004 + 0.009) / 2.0).epsilon(0.02));
    }
    SUBCASE("upscale weight falls and downscale weight rises with Dm") {
        auto weights = [](double dm) {
            const double den = 1.0 + dm + (1.0 - dm * dm);
            return std::pair<double, double>{dm / den, (1.0 - dm * dm) / den};
        };
        double prev_down = -1.0, prev_up = 2.0;
        for (double dm = 0.0; dm <= 1.0 + 1e-9; dm += 1.0 / 64) {
            auto [w_down, w_up] = weights(dm);
            CHECK(w_down >= prev_down - 1e-12);
            CHECK(w_up <= prev_up + 1e-12);
            prev_down = w_down;
            prev_up = w_up;
        }
    }
    SUBCASE("all-zero triple is rejected") {
        Grid z(Shape{1, 2, 2}, 0.0);
        CHECK_THROWS_AS(blend_boosted({z, z, z}), Error);
    }
}
