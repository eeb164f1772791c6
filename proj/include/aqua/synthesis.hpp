#pragma once

#include <vector>

#include "aqua/quantize.hpp"
#include "aqua/warp.hpp"

namespace aqua {

namespace detail {

constexpr double kInvalidLogitOffset = 30.0; // invalid samples act as logit -30

/// Per-plane warps shared by the probability volume and view synthesis. The
/// source stack is [extra image channels..., ones]; each plane is warped once
/// under its own inverse-depth field, so the last stack channel carries the
/// continuous in-bounds weight used both for the logit pushdown and the mass.
struct WarpedPlanes {
    std::vector<DiffValue> eff_logits; ///< warped logit with out-of-frame pushdown
    std::vector<DiffValue> stacks;     ///< warped [image..., ones] per plane
    std::vector<Grid> validity;        ///< binary per plane
    int extra_channels = 0;
};

inline WarpedPlanes warp_planes(DiffValue logits, DiffValue levels, const RigidPose& pose,
                                const CameraIntrinsics& K0, const CameraIntrinsics& Kc,
                                DiffValue* extra_image) {
    if (logits.shape() != levels.shape())
        throw Error("synthesis: logits " + logits.shape().str() + " vs levels " +
                    levels.shape().str());
    Tape& t = *logits.tape();
    const int N = logits.shape().planes;

    DiffValue ones = t.constant(Grid::full(Shape{1, logits.shape().rows, logits.shape().cols}, 1.0));
    DiffValue src_stack = extra_image ? concat_planes({*extra_image, ones}) : ones;
    const int extra = extra_image ? extra_image->shape().planes : 0;

    WarpedPlanes out;
    out.extra_channels = extra;
    for (int n = 0; n < N; ++n) {
        DiffValue dn = slice_plane(levels, n);
        WarpCoords wc = plane_warp_coords(dn, pose, K0, Kc);
        BilinearSample stack_s = bilinear_sample(src_stack, wc.coords);
        BilinearSample logit_s = bilinear_sample(slice_plane(logits, n), wc.coords);
        DiffValue warped_ones = slice_plane(stack_s.values, extra);
        // blend toward a strongly negative logit as the sample leaves the frame
        DiffValue eff = add(logit_s.values, mul(add(warped_ones, -1.0), kInvalidLogitOffset));
        Grid validity = logit_s.validity;
        for (std::int64_t i = 0; i < validity.numel(); ++i)
            if (wc.front[i] == 0.0) validity[i] = 0.0;
        out.eff_logits.push_back(eff);
        out.stacks.push_back(stack_s.values);
        out.validity.push_back(std::move(validity));
    }
    return out;
}

} // namespace detail

/// Disparity probability volume seen from camera c: each logit channel is
/// warped under its own level field, channels are concatenated, then
/// softmaxed at the reference. Invalid (out-of-frame) samples contribute
/// effectively zero probability.
inline DiffValue project_probability_volume(DiffValue logits, DiffValue levels,
                                            const RigidPose& pose, const CameraIntrinsics& K0,
                                            const CameraIntrinsics& Kc) {
    detail::WarpedPlanes planes = detail::warp_planes(logits, levels, pose, K0, Kc, nullptr);
    return channel_softmax(concat_planes(planes.eff_logits));
}

struct SynthesisResult {
    DiffValue image;       ///< (C, H, W) synthesized reference view
    DiffValue prob_volume; ///< (N, H, W) projected probability volume
    DiffValue mass;        ///< (1, H, W) total projected probability
    Grid occlusion;        ///< binary: 1 where mass >= tau_o
};

/// Pixels of the reference view that are synthesizable from the target image.
inline Grid occlusion_mask(const Grid& mass, double tau_o = 0.5) {
    Grid out(mass.shape());
    for (std::int64_t i = 0; i < mass.numel(); ++i) out[i] = mass[i] >= tau_o ? 1.0 : 0.0;
    return out;
}

/// Free-view synthesis: warps the target image by every quantization plane
/// and sums the warps weighted by the projected probability volume. The mass
/// map weights the warped unit image, so disocclusions show up as low mass.
inline SynthesisResult synthesize_view(DiffValue src_image, DiffValue logits, DiffValue levels,
                                       const RigidPose& pose, const CameraIntrinsics& K0,
                                       const CameraIntrinsics& Kc, double tau_o = 0.5) {
    detail::WarpedPlanes planes =
        detail::warp_planes(logits, levels, pose, K0, Kc, &src_image);
    DiffValue probs = channel_softmax(concat_planes(planes.eff_logits));
    DiffValue blended = probability_blend(probs, planes.stacks);
    const int C = planes.extra_channels;
    SynthesisResult res{slice_planes(blended, 0, C), probs, slice_plane(blended, C), Grid()};
    res.occlusion = occlusion_mask(res.mass.value(), tau_o);
    return res;
}

inline Grid occlusion_mask(const SynthesisResult& result, double tau_o = 0.5) {
    return occlusion_mask(result.mass.value(), tau_o);
}

} // namespace aqua
