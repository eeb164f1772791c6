#include <doctest.h>

#include "aqua/quantize.hpp"

using namespace aqua;

namespace {

Grid beta_map(int rows, int cols, double value) { return Grid(Shape{1, rows, cols}, value); }

} // namespace

TEST_CASE("quantization level curves") {
    QuantizationConfig cfg{33, 0.01, 0.3};

    SUBCASE("endpoints are pinned exactly for any beta") {
        for (double b : {0.25, 0.5, 1.0, 2.0, 4.0}) {
            Tape t;
            DiffValue levels = quantization_levels(cfg, t.input(beta_map(2, 3, b)));
            const Grid& v = levels.value();
            const std::size_t hw = 6;
            for (std::size_t i = 0; i < hw; ++i) {
                CHECK(v[i] == 0.01);                  // exact, not approximate
                CHECK(v[(33 - 1) * hw + i] == 0.3);
            }
        }
    }
    SUBCASE("levels increase strictly in n") {
        for (double b : {0.25, 0.5, 1.0, 2.0, 4.0}) {
            Tape t;
            const Grid& v = quantization_levels(cfg, t.input(beta_map(1, 1, b))).value();
            for (int n = 0; n + 1 < 33; ++n) CHECK(v[n] < v[n + 1]);
        }
    }
    SUBCASE("beta = 1 recovers the fixed exponential curve") {
        Tape t;
        const Grid& v = quantization_levels(cfg, t.input(beta_map(1, 1, 1.0))).value();
        const double L = std::log(0.3 / 0.01);
        for (int n = 0; n < 33; ++n) {
            const double expect = 0.3 * std::exp(L * (static_cast<double>(n) / 32 - 1.0));
            CHECK(std::abs(v[n] - expect) <= 1e-12);
        }
        // closed-form midpoint: 0.3 * 30^(-1/2)
        CHECK(v[16] == doctest::Approx(0.3 / std::sqrt(30.0)).epsilon(1e-12));
        CHECK(v[16] == doctest::Approx(0.05477).epsilon(1e-3));
    }
    SUBCASE("beta = 2 packs levels toward far depths") {
        Tape t;
        const Grid& v = quantization_levels(cfg, t.input(beta_map(1, 1, 2.0))).value();
        CHECK(v[16] == doctest::Approx(0.3 * std::pow(30.0, -0.75)).epsilon(1e-12));
        CHECK(v[16] == doctest::Approx(0.0234).epsilon(1e-2));
        // compared with beta = 1 the midpoint level is smaller (farther)
        CHECK(v[16] < 0.3 / std::sqrt(30.0));
    }
    SUBCASE("beta must be positive") {
        Tape t;
        CHECK_THROWS_AS(quantization_levels(cfg, t.input(beta_map(1, 1, 0.0))), Error);
        CHECK_THROWS_AS(quantization_levels(cfg, t.input(beta_map(1, 1, -1.0))), Error);
    }
    SUBCASE("grid variant matches the tape op") {
        Rng rng(9);
        Grid beta = rng.uniform_grid(Shape{1, 3, 4}, 0.3, 3.0);
        Tape t;
        const Grid& a = quantization_levels(cfg, t.input(beta)).value();
        Grid b = quantization_levels_grid(cfg, beta);
        for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS((QuantizationConfig{1, 0.01, 0.3}).validate(), Error);
    CHECK_THROWS_AS((QuantizationConfig{33, 0.3, 0.01}).validate(), Error);
    CHECK_THROWS_AS((QuantizationConfig{33, 0.0, 0.3}).validate(), Error);
    CHECK_NOTHROW((QuantizationConfig{2, 0.01, 0.3}).validate());
}

TEST_CASE("aggregate_disparity") {
    SUBCASE("saturated logits pick out a single level") {
        QuantizationConfig cfg{5, 0.02, 0.4};
        Tape t;
        DiffValue levels = quantization_levels(cfg, t.input(beta_map(1, 1, 1.0)));
        Grid logits(Shape{5, 1, 1}, 0.0);
        logits[2] = 50.0;
        DiffValue d = aggregate_disparity(t.input(std::move(logits)), levels);
        CHECK(std::abs(d.value()[0] - levels.value()[2]) < 1e-9);
    }
    SUBCASE("uniform logits average the levels") {
        QuantizationConfig cfg{7, 0.02, 0.4};
        Tape t;
        DiffValue levels = quantization_levels(cfg, t.input(beta_map(1, 1, 1.0)));
        DiffValue d = aggregate_disparity(t.input(Grid(Shape{7, 1, 1}, 0.0)), levels);
        double mean = 0.0;
        for (int n = 0; n < 7; ++n) mean += levels.value()[n];
        mean /= 7.0;
        CHECK(d.value()[0] == doctest::Approx(mean).epsilon(1e-12));
    }
    SUBCASE("two-level hand example") {
        Tape t;
        Grid logits(Shape{2, 1, 1});
        logits[0] = 0.0;
        logits[1] = std::log(3.0);
        Grid levels(Shape{2, 1, 1});
        levels[0] = 0.1;
        levels[1] = 0.2;
        DiffValue d = aggregate_disparity(t.input(std::move(logits)), t.input(std::move(levels)));
        CHECK(d.value()[0] == doctest::Approx(0.175).epsilon(1e-12));
    }
    SUBCASE("output stays inside [d_min, d_max]") {
        QuantizationConfig cfg{9, 0.01, 0.3};
        Rng rng(31);
        for (int trial = 0; trial < 20; ++trial) {
            Tape t;
            DiffValue levels =
                quantization_levels(cfg, t.input(rng.uniform_grid(Shape{1, 4, 5}, 0.3, 4.0)));
            DiffValue d = aggregate_disparity(
                t.input(rng.uniform_grid(Shape{9, 4, 5}, -10.0, 10.0)), levels);
            for (std::int64_t i = 0; i < d.value().numel(); ++i) {
                CHECK(d.value()[i] >= cfg.d_min - 1e-12);
                CHECK(d.value()[i] <= cfg.d_max + 1e-12);
            }
        }
    }
}
