#pragma once

#include "aqua/features.hpp"
#include "aqua/synthesis.hpp"

namespace aqua {

struct LossWeights {
    double alpha_ds = 0.1;  ///< disparity smoothness
    double alpha_b = 0.1;   ///< boosting
    double alpha_p = 0.01;  ///< perceptual term inside the synthesis loss

    void validate() const {
        if (alpha_ds < 0.0 || alpha_b < 0.0 || alpha_p < 0.0)
            throw Error("loss weights must be non-negative");
    }
};

struct SynthesisLoss {
    DiffValue loss;
    std::int64_t active_pixels = 0;
    bool empty_mask = false; ///< W was all zero; L1 term defined as 0
};

/// Masked synthesis loss against a reference view:
///   mean over active pixels*channels of W (x) |I' - I|
///   + alpha_p * sum_l mean((phi_l(I') - phi_l(Iw))^2),
/// with Iw = (1-W) (x) I' + W (x) I, i.e. the reference with masked-out
/// content replaced by the synthesized image so the perceptual term never
/// penalizes excluded regions. W combines occlusion and moving-object masks
/// and is treated as constant.
inline SynthesisLoss synthesis_loss(DiffValue synth, const Grid& reference, const Grid& mask_w,
                                    const LossWeights& weights, const FeatureExtractor* features) {
    Tape& t = *synth.tape();
    const Shape s = synth.shape();
    if (reference.shape() != s)
        throw Error("synthesis_loss: reference shape " + reference.shape().str() + " vs " +
                    s.str());
    if (mask_w.planes() != 1 || mask_w.rows() != s.rows || mask_w.cols() != s.cols)
        throw Error("synthesis_loss: mask must be (1, H, W)");

    SynthesisLoss out;
    for (std::int64_t i = 0; i < mask_w.numel(); ++i)
        if (mask_w[i] > 0.5) ++out.active_pixels;
    out.empty_mask = out.active_pixels == 0;

    DiffValue ref = t.constant(reference);
    DiffValue w = t.constant(mask_w);

    if (out.empty_mask) {
        out.loss = mul(reduce_sum(mul(vabs(sub(synth, ref)), w)), 0.0);
    } else {
        DiffValue l1 = reduce_sum(mul(vabs(sub(synth, ref)), w));
        out.loss = mul(l1, 1.0 / static_cast<double>(out.active_pixels * s.planes));
    }

    if (features != nullptr && weights.alpha_p > 0.0) {
        DiffValue iw = add(mul(synth, sub(t.constant(1.0), w)), mul(ref, w));
        std::vector<DiffValue> phi_synth = features->pyramid(synth);
        std::vector<DiffValue> phi_iw = features->pyramid(iw);
        for (std::size_t l = 0; l < phi_synth.size(); ++l) {
            DiffValue d = sub(phi_synth[l], phi_iw[l]);
            out.loss = add(out.loss, mul(reduce_mean(mul(d, d)), weights.alpha_p));
        }
    }
    return out;
}

/// Edge-aware smoothness of the mean-normalized disparity: forward-difference
/// gradients weighted down across image edges,
///   mean(|dx(D/mean D)| e^{-|dx I|}) + mean(|dy(D/mean D)| e^{-|dy I|}).
inline DiffValue smoothness_loss(DiffValue disparity, const Grid& image) {
    Tape& t = *disparity.tape();
    const Shape s = disparity.shape();
    if (s.planes != 1) throw Error("smoothness_loss: disparity must be a single plane");
    if (image.rows() != s.rows || image.cols() != s.cols)
        throw Error("smoothness_loss: image size mismatch");

    // image-gradient weights, constant w.r.t. the fit
    const int C = image.planes();
    DiffValue norm = divide(disparity, reduce_mean(disparity));
    DiffValue loss = t.constant(0.0);
    if (s.cols >= 2) {
        Grid wx(Shape{1, s.rows, s.cols - 1});
        for (int r = 0; r < s.rows; ++r)
            for (int c = 0; c + 1 < s.cols; ++c) {
                double g = 0.0;
                for (int ch = 0; ch < C; ++ch)
                    g += std::abs(image.at(ch, r, c + 1) - image.at(ch, r, c));
                wx.at(0, r, c) = std::exp(-g / C);
            }
        loss = add(loss, reduce_mean(mul(vabs(diff_x(norm)), t.constant(std::move(wx)))));
    }
    if (s.rows >= 2) {
        Grid wy(Shape{1, s.rows - 1, s.cols});
        for (int r = 0; r + 1 < s.rows; ++r)
            for (int c = 0; c < s.cols; ++c) {
                double g = 0.0;
                for (int ch = 0; ch < C; ++ch)
                    g += std::abs(image.at(ch, r + 1, c) - image.at(ch, r, c));
                wy.at(0, r, c) = std::exp(-g / C);
            }
        loss = add(loss, reduce_mean(mul(vabs(diff_y(norm)), t.constant(std::move(wy)))));
    }
    return loss;
}

/// Pseudo-supervision on likely-moving pixels: mean of (1 - M0) (x) |D - D*|
/// normalized by the maximum boosted disparity. D* and M0 are constants.
inline DiffValue boosting_loss(DiffValue disparity, const Grid& boosted, const Grid& mask_static) {
    Tape& t = *disparity.tape();
    if (boosted.shape() != disparity.shape())
        throw Error("boosting_loss: boosted shape mismatch");
    if (mask_static.shape() != disparity.shape())
        throw Error("boosting_loss: mask shape mismatch");
    const double dmax = boosted.max();
    if (dmax < 1e-12) throw Error("boosting_loss: degenerate boosted disparity");
    Grid inv_mask(mask_static.shape());
    for (std::int64_t i = 0; i < mask_static.numel(); ++i)
        inv_mask[i] = mask_static[i] > 0.5 ? 0.0 : 1.0;
    DiffValue term = mul(vabs(sub(disparity, t.constant(boosted))), t.constant(std::move(inv_mask)));
    return mul(reduce_mean(term), 1.0 / dmax);
}

/// Stage losses: stage 1 is synthesis + alpha_ds * smoothness, stage 2 adds
/// alpha_b * boosting. Synthesis/boosting terms are built by the caller (the
/// synthesis component already averages its reference views).
inline DiffValue stage_loss(int stage, DiffValue synthesis_term, DiffValue smoothness_term,
                            DiffValue boosting_term, const LossWeights& weights) {
    weights.validate();
    DiffValue total = add(synthesis_term, mul(smoothness_term, weights.alpha_ds));
    if (stage == 2) total = add(total, mul(boosting_term, weights.alpha_b));
    else if (stage != 1) throw Error("stage_loss: stage must be 1 or 2");
    return total;
}

} // namespace aqua
