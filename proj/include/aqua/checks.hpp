#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aqua/fit.hpp"
#include "aqua/gradcheck.hpp"
#include "aqua/scene.hpp"

namespace aqua {

struct NamedGradCheck {
    std::string name;
    std::function<GradCheckReport()> run;
};

namespace detail {

/// Scalar loss from a grid output: sum of a fixed random projection, so
/// every output entry influences the loss with a distinct weight.
inline DiffValue project_to_scalar(Tape& t, DiffValue out, std::uint64_t seed) {
    Rng rng(seed);
    return reduce_sum(mul(out, t.constant(rng.uniform_grid(out.shape(), -1.0, 1.0))));
}

inline CameraIntrinsics check_camera(int rows, int cols) {
    CameraIntrinsics K;
    K.fx = K.fy = 2.0 * cols;
    K.cx = (cols - 1) / 2.0;
    K.cy = (rows - 1) / 2.0;
    K.width = cols;
    K.height = rows;
    return K;
}

inline RigidPose check_pose() {
    RigidPose p;
    p.R = Mat3::rot_y(0.01);
    p.t = {0.11, 0.013, 0.004};
    return p;
}

} // namespace detail

/// The finite-difference suite: one entry per differentiable operation plus
/// the full stage losses on a small rendered scene.
inline std::vector<NamedGradCheck> standard_gradient_checks(int rows = 8, int cols = 12,
                                                            int levels = 5) {
    std::vector<NamedGradCheck> checks;
    const Shape plane{1, rows, cols};
    const Shape volume{levels, rows, cols};
    const CameraIntrinsics K = detail::check_camera(rows, cols);
    const RigidPose pose = detail::check_pose();

    auto add_case = [&checks](std::string name, LossBuilder build, std::vector<Grid> params) {
        checks.push_back({std::move(name), [build = std::move(build), params = std::move(params)] {
                              return check_gradients(build, params);
                          }});
    };

    {
        Rng rng(11);
        add_case(
            "add",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, add(x[0], x[1]), 101);
            },
            {rng.uniform_grid(plane, -2.0, 2.0), rng.uniform_grid(plane, -2.0, 2.0)});
    }
    {
        Rng rng(12);
        add_case(
            "sub",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, sub(x[0], x[1]), 102);
            },
            {rng.uniform_grid(plane, -2.0, 2.0), rng.uniform_grid(plane, -2.0, 2.0)});
    }
    {
        Rng rng(13);
        add_case(
            "mul",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, mul(x[0], x[1]), 103);
            },
            {rng.uniform_grid(plane, -2.0, 2.0), rng.uniform_grid(plane, -2.0, 2.0)});
    }
    {
        Rng rng(14);
        add_case(
            "div",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, divide(x[0], x[1]), 104);
            },
            {rng.uniform_grid(plane, -2.0, 2.0), rng.uniform_grid(plane, 0.5, 2.0)});
    }
    {
        Rng rng(15);
        add_case(
            "exp",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, vexp(x[0]), 105);
            },
            {rng.uniform_grid(plane, -2.0, 2.0)});
    }
    {
        Rng rng(16);
        add_case(
            "ln",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, vln(x[0]), 106);
            },
            {rng.uniform_grid(plane, 0.5, 3.0)});
    }
    {
        Rng rng(17);
        add_case(
            "pow",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, vpow(x[0], x[1]), 107);
            },
            {rng.uniform_grid(plane, 0.5, 2.0), rng.uniform_grid(plane, 0.5, 3.0)});
    }
    {
        Rng rng(18);
        Grid a(plane);
        for (std::int64_t i = 0; i < a.numel(); ++i)
            a[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.25, 2.0);
        add_case(
            "abs",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, vabs(x[0]), 108);
            },
            {std::move(a)});
    }
    {
        Rng rng(19);
        Grid a(plane);
        for (std::int64_t i = 0; i < a.numel(); ++i) {
            double v = rng.uniform(-2.0, 2.0);
            while (std::abs(std::abs(v) - 1.0) < 0.01) v = rng.uniform(-2.0, 2.0);
            a[i] = v;
        }
        add_case(
            "clamp",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, clamp(x[0], -1.0, 1.0), 109);
            },
            {std::move(a)});
    }
    {
        Rng rng(20);
        add_case(
            "softplus",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, softplus(x[0]), 110);
            },
            {rng.uniform_grid(plane, -3.0, 3.0)});
    }
    {
        Rng rng(21);
        add_case(
            "tanh",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, vtanh(x[0]), 111);
            },
            {rng.uniform_grid(plane, -2.0, 2.0)});
    }
    {
        Rng rng(22);
        add_case(
            "channel_softmax",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, channel_softmax(x[0]), 112);
            },
            {rng.uniform_grid(volume, -2.0, 2.0)});
    }
    {
        // sample a source image at fixed fractional coordinates
        Rng rng(23);
        Grid coords(Shape{2, rows, cols});
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                coords.at(0, r, c) = rng.uniform(0.0, cols - 1.3) + rng.uniform(0.2, 0.8);
                coords.at(1, r, c) = rng.uniform(0.0, rows - 1.3) + rng.uniform(0.2, 0.8);
            }
        add_case(
            "bilinear_sample_src",
            [coords](Tape& t, const std::vector<DiffValue>& x) {
                BilinearSample s = bilinear_sample(x[0], t.constant(coords));
                return detail::project_to_scalar(t, s.values, 113);
            },
            {rng.uniform_grid(Shape{3, rows, cols}, 0.0, 1.0)});
    }
    {
        Rng rng(24);
        Grid src = rng.uniform_grid(Shape{3, rows, cols}, 0.0, 1.0);
        Grid coords(Shape{2, rows, cols});
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                coords.at(0, r, c) = rng.uniform(0.0, cols - 2.0) + rng.uniform(0.3, 0.7);
                coords.at(1, r, c) = rng.uniform(0.0, rows - 2.0) + rng.uniform(0.3, 0.7);
            }
        add_case(
            "bilinear_sample_coords",
            [src](Tape& t, const std::vector<DiffValue>& x) {
                BilinearSample s = bilinear_sample(t.constant(src), x[0]);
                return detail::project_to_scalar(t, s.values, 114);
            },
            {std::move(coords)});
    }
    {
        Rng rng(25);
        Grid src = rng.uniform_grid(Shape{3, rows, cols}, 0.0, 1.0);
        add_case(
            "plane_warp_coords",
            [src, pose, K](Tape& t, const std::vector<DiffValue>& x) {
                PlaneWarp w = warp_plane(t.constant(src), x[0], pose, K, K);
                return detail::project_to_scalar(t, w.image, 115);
            },
            {rng.uniform_grid(plane, 0.05, 0.3)});
    }
    {
        Rng rng(26);
        QuantizationConfig cfg{levels, 0.01, 0.3};
        add_case(
            "quantization_levels",
            [cfg](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, quantization_levels(cfg, x[0]), 116);
            },
            {rng.uniform_grid(plane, 0.5, 3.0)});
    }
    {
        Rng rng(27);
        QuantizationConfig cfg{levels, 0.01, 0.3};
        add_case(
            "aggregate_disparity",
            [cfg](Tape& t, const std::vector<DiffValue>& x) {
                DiffValue d = quantization_levels(cfg, x[1]);
                return detail::project_to_scalar(t, aggregate_disparity(x[0], d), 117);
            },
            {rng.uniform_grid(volume, -2.0, 2.0), rng.uniform_grid(plane, 0.5, 3.0)});
    }
    {
        Rng rng(28);
        add_case(
            "diff_x",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, diff_x(x[0]), 118);
            },
            {rng.uniform_grid(plane, -2.0, 2.0)});
        add_case(
            "diff_y",
            [](Tape& t, const std::vector<DiffValue>& x) {
                return detail::project_to_scalar(t, diff_y(x[0]), 119);
            },
            {rng.uniform_grid(plane, -2.0, 2.0)});
    }
    {
        Rng rng(29);
        FeatureExtractor fe = FeatureExtractor::make_seeded(5, 4);
        add_case(
            "feature_pyramid",
            [fe](Tape& t, const std::vector<DiffValue>& x) {
                std::vector<DiffValue> maps = fe.pyramid(x[0]);
                DiffValue loss;
                for (std::size_t l = 0; l < maps.size(); ++l) {
                    DiffValue p = detail::project_to_scalar(t, maps[l], 120 + l);
                    loss = l == 0 ? p : add(loss, p);
                }
                return loss;
            },
            {rng.uniform_grid(Shape{3, rows, cols}, 0.0, 1.0)});
    }
    {
        Rng rng(30);
        QuantizationConfig cfg{levels, 0.05, 0.3};
        add_case(
            "project_probability_volume",
            [cfg, pose, K](Tape& t, const std::vector<DiffValue>& x) {
                DiffValue beta = add(softplus(x[1]), 1e-3);
                DiffValue lv = quantization_levels(cfg, beta);
                DiffValue pv = project_probability_volume(x[0], lv, pose, K, K);
                return detail::project_to_scalar(t, pv, 123);
            },
            {rng.uniform_grid(volume, -1.0, 1.0), rng.uniform_grid(plane, -0.5, 1.5)});
    }
    {
        Rng rng(31);
        QuantizationConfig cfg{levels, 0.05, 0.3};
        Grid src = rng.uniform_grid(Shape{3, rows, cols}, 0.0, 1.0);
        add_case(
            "synthesize_view",
            [cfg, pose, K, src](Tape& t, const std::vector<DiffValue>& x) {
                DiffValue beta = add(softplus(x[1]), 1e-3);
                DiffValue lv = quantization_levels(cfg, beta);
                SynthesisResult s = synthesize_view(t.constant(src), x[0], lv, pose, K, K);
                return add(detail::project_to_scalar(t, s.image, 124),
                           detail::project_to_scalar(t, s.mass, 125));
            },
            {rng.uniform_grid(volume, -1.0, 1.0), rng.uniform_grid(plane, -0.5, 1.5)});
    }

    // full losses on a small rendered scene
    SceneSpec scene;
    scene.camera = K;
    scene.background_depth = 10.0;
    scene.background_freq = 0.15;
    SceneLayer layer;
    layer.depth = 5.0;
    layer.rect = {2.0, 1.0, 6.0, 4.0};
    layer.texture_freq = 0.15;
    scene.layers.push_back(layer);
    scene.poses = {RigidPose::identity(), detail::check_pose(),
                   RigidPose{Mat3::rot_y(-0.01), {-0.1, -0.01, 0.002}}};
    const Grid target = render(scene, 0).image;
    const Grid ref1 = render(scene, 1).image;
    const Grid ref2 = render(scene, 2).image;
    const QuantizationConfig fit_cfg{levels, 0.05, 0.4};
    const LossWeights weights;
    const FeatureExtractor fe = FeatureExtractor::make_seeded(7, 4);

    {
        Rng rng(32);
        add_case(
            "synthesis_loss",
            [fit_cfg, weights, fe, target, ref1, pose = scene.poses[1],
             K](Tape& t, const std::vector<DiffValue>& x) {
                DiffValue beta = add(softplus(x[1]), 1e-3);
                DiffValue lv = quantization_levels(fit_cfg, beta);
                SynthesisResult s = synthesize_view(t.constant(target), x[0], lv, pose, K, K);
                return synthesis_loss(s.image, ref1, s.occlusion, weights, &fe).loss;
            },
            {rng.uniform_grid(volume, -1.0, 1.0), rng.uniform_grid(plane, -0.5, 1.5)});
    }
    {
        Rng rng(33);
        add_case(
            "smoothness_loss",
            [fit_cfg, target](Tape& t, const std::vector<DiffValue>& x) {
                DiffValue beta = add(softplus(x[1]), 1e-3);
                DiffValue lv = quantization_levels(fit_cfg, beta);
                DiffValue disp = aggregate_disparity(x[0], lv);
                return smoothness_loss(disp, target);
            },
            {rng.uniform_grid(volume, -1.0, 1.0), rng.uniform_grid(plane, -0.5, 1.5)});
    }
    {
        Rng rng(34);
        Grid dstar = rng.uniform_grid(plane, 0.05, 0.4);
        Grid mask(plane);
        for (std::int64_t i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        add_case(
            "boosting_loss",
            [fit_cfg, dstar, mask](Tape& t, const std::vector<DiffValue>& x) {
                DiffValue beta = add(softplus(x[1]), 1e-3);
                DiffValue lv = quantization_levels(fit_cfg, beta);
                DiffValue disp = aggregate_disparity(x[0], lv);
                return boosting_loss(disp, dstar, mask);
            },
            {rng.uniform_grid(volume, -1.0, 1.0), rng.uniform_grid(plane, -0.5, 1.5)});
    }

    auto stage_builder = [fit_cfg, weights, fe, target, ref1, ref2, scene,
                          K](int stage, const Grid& m0, const Grid& m1, const Grid& m2,
                             const Grid& dstar) {
        std::vector<RigidPose> ref_poses = {scene.poses[1], scene.poses[2]};
        std::vector<Grid> refs = {ref1, ref2};
        std::vector<Grid> ref_masks = {m1, m2};
        return [=](Tape& t, const std::vector<DiffValue>& x) {
            DiffValue beta = add(softplus(x[1]), 1e-3);
            DiffValue lv = quantization_levels(fit_cfg, beta);
            DiffValue disp = aggregate_disparity(x[0], lv);
            DiffValue synth_term;
            for (std::size_t i = 0; i < refs.size(); ++i) {
                SynthesisResult s =
                    synthesize_view(t.constant(target), x[0], lv, ref_poses[i], K, K);
                Grid w = s.occlusion;
                if (stage == 2) {
                    Grid projected = project_spimo_mask(m0, x[0].value(), lv.value(),
                                                        ref_poses[i], K, K);
                    for (std::int64_t e = 0; e < w.numel(); ++e)
                        w[e] *= ref_masks[i][e] * projected[e];
                }
                DiffValue term =
                    mul(synthesis_loss(s.image, refs[i], w, weights, &fe).loss, 0.5);
                synth_term = i == 0 ? term : add(synth_term, term);
            }
            DiffValue smooth = smoothness_loss(disp, target);
            DiffValue boost = stage == 2 ? boosting_loss(disp, dstar, m0) : t.constant(0.0);
            return stage_loss(stage, synth_term, smooth, boost, weights);
        };
    };
    {
        Rng rng(35);
        Grid ones(plane, 1.0);
        add_case("stage1_loss", stage_builder(1, ones, ones, ones, Grid(plane, 0.1)),
                 {rng.uniform_grid(volume, -1.0, 1.0), rng.uniform_grid(plane, -0.5, 1.5)});
    }
    {
        Rng rng(36);
        Grid m0(plane, 1.0), m1(plane, 1.0), m2(plane, 1.0);
        // carve a "moving" block into the target mask and one reference mask
        for (int r = 2; r < 5; ++r)
            for (int c = 3; c < 7; ++c) {
                m0.at(0, r, c) = 0.0;
                m1.at(0, r, c) = 0.0;
            }
        Grid dstar = rng.uniform_grid(plane, 0.05, 0.4);
        add_case("stage2_loss", stage_builder(2, m0, m1, m2, dstar),
                 {rng.uniform_grid(volume, -1.0, 1.0), rng.uniform_grid(plane, -0.5, 1.5)});
    }

    return checks;
}

} // namespace aqua
