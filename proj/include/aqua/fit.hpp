#pragma once

#include <vector>

#include "aqua/losses.hpp"
#include "aqua/spimo.hpp"

namespace aqua {

struct FitOptions {
    QuantizationConfig quant;
    LossWeights weights;
    int stage = 1;
    int steps = 500;
    double lr = 2.0e4;
    double lr_decay = 0.999; ///< multiplicative, applied per step
    double tau_o = 0.5;
    std::uint64_t seed = 0;
    int feature_channels = 8;

    // stage-2 supervision (all optional, treated as constants)
    const Grid* mask_target = nullptr;        ///< M_0, 1 = static
    std::vector<const Grid*> ref_masks;       ///< M_c per reference, 1 = static
    const Grid* boosted = nullptr;            ///< D* pseudo-ground-truth disparity
};

struct FitTraceRow {
    int step = 0;
    double total = 0.0;
    double synthesis = 0.0;
    double smoothness = 0.0;
    double boosting = 0.0;
    double lr = 0.0;
};

struct FitResult {
    Grid logits;    ///< (N, H, W)
    Grid beta;      ///< (1, H, W)
    Grid disparity; ///< (1, H, W) aggregated soft disparity
    std::vector<FitTraceRow> trace;
};

namespace detail {

inline Grid softplus_grid(const Grid& raw, double eps) {
    Grid out(raw.shape());
    for (std::int64_t i = 0; i < raw.numel(); ++i) {
        const double x = raw[i];
        double sp;
        if (x > 30.0) sp = x;
        else if (x < -30.0) sp = std::exp(x);
        else sp = std::log1p(std::exp(x));
        out[i] = sp + eps;
    }
    return out;
}

} // namespace detail

/// Plain gradient descent over per-pixel disparity logits (init 0) and the
/// raw quantization parameter (init so beta = 1, via beta = softplus(raw) +
/// 1e-3). Deterministic given the seed; throws with the step index if the
/// loss goes non-finite.
inline FitResult fit_depth(const Grid& target, const std::vector<Grid>& refs,
                           const std::vector<RigidPose>& ref_poses, const CameraIntrinsics& K,
                           const FitOptions& opt) {
    opt.quant.validate();
    opt.weights.validate();
    if (refs.empty() || refs.size() != ref_poses.size())
        throw Error("fit_depth: need one pose per reference frame");
    if (target.planes() != 3) throw Error("fit_depth: target must be a color image");
    if (opt.stage == 2 && !opt.ref_masks.empty() && opt.ref_masks.size() != refs.size())
        throw Error("fit_depth: need one mask per reference frame");
    if (opt.stage != 1 && opt.stage != 2) throw Error("fit_depth: stage must be 1 or 2");

    const int H = target.rows(), W = target.cols(), N = opt.quant.levels;
    constexpr double kBetaEps = 1e-3;
    const double raw0 = std::log(std::exp(1.0 - kBetaEps) - 1.0);

    Grid logits(Shape{N, H, W}, 0.0);
    Grid raw_beta(Shape{1, H, W}, raw0);
    FeatureExtractor features =
        FeatureExtractor::make_seeded(opt.seed, opt.feature_channels);
    const bool perceptual = opt.weights.alpha_p > 0.0;

    FitResult result;
    result.trace.reserve(opt.steps);
    double lr = opt.lr;

    const bool use_masks = opt.stage == 2 && opt.mask_target != nullptr && !opt.ref_masks.empty();
    const bool use_boost = opt.stage == 2 && opt.boosted != nullptr && opt.mask_target != nullptr;

    for (int step = 0; step < opt.steps; ++step) {
        try {
            Tape t;
            DiffValue dl = t.input(logits);
            DiffValue braw = t.input(raw_beta);
            DiffValue beta = add(softplus(braw), kBetaEps);
            DiffValue levels = quantization_levels(opt.quant, beta);
            DiffValue disp = aggregate_disparity(dl, levels);
            DiffValue target_node = t.constant(target);

            DiffValue synth_term;
            for (std::size_t i = 0; i < refs.size(); ++i) {
                SynthesisResult sr = synthesize_view(target_node, dl, levels, ref_poses[i], K, K,
                                                     opt.tau_o);
                Grid w = sr.occlusion;
                if (use_masks) {
                    Grid projected = project_spimo_mask(*opt.mask_target, logits,
                                                        levels.value(), ref_poses[i], K, K);
                    for (std::int64_t e = 0; e < w.numel(); ++e)
                        w[e] *= (*opt.ref_masks[i])[e] * projected[e];
                }
                SynthesisLoss sl = synthesis_loss(sr.image, refs[i], w, opt.weights,
                                                  perceptual ? &features : nullptr);
                DiffValue term = mul(sl.loss, 1.0 / static_cast<double>(refs.size()));
                synth_term = i == 0 ? term : add(synth_term, term);
            }

            DiffValue smooth_term = smoothness_loss(disp, target);
            DiffValue boost_term = use_boost
                                       ? boosting_loss(disp, *opt.boosted, *opt.mask_target)
                                       : t.constant(0.0);
            DiffValue total = stage_loss(opt.stage, synth_term, smooth_term, boost_term,
                                         opt.weights);

            t.backward(total);
            const Grid& g_logits = dl.adjoint();
            const Grid& g_raw = braw.adjoint();
            for (std::int64_t e = 0; e < logits.numel(); ++e) logits[e] -= lr * g_logits[e];
            for (std::int64_t e = 0; e < raw_beta.numel(); ++e) raw_beta[e] -= lr * g_raw[e];

            result.trace.push_back({step, total.value().as_scalar(),
                                    synth_term.value().as_scalar(),
                                    smooth_term.value().as_scalar(),
                                    boost_term.value().as_scalar(), lr});
        } catch (const Error& e) {
            throw Error("fit_depth: diverged at step " + std::to_string(step) + ": " + e.what());
        }
        lr *= opt.lr_decay;
    }

    result.logits = logits;
    result.beta = detail::softplus_grid(raw_beta, kBetaEps);
    {
        Tape t;
        DiffValue disp = aggregate_disparity(t.input(logits),
                                             t.input(quantization_levels_grid(opt.quant,
                                                                              result.beta)));
        result.disparity = disp.value();
    }
    return result;
}

} // namespace aqua
