#pragma once

#include "aqua/tape.hpp"

namespace aqua {

/// Inverse-depth discretization range. Bounds are normalized disparities
/// (pixel disparity per unit focal-length-times-baseline).
struct QuantizationConfig {
    int levels = 33;
    double d_min = 0.01;
    double d_max = 0.3;

    void validate() const {
        if (levels < 2) throw Error("quantization: need at least 2 levels");
        if (!(d_min > 0.0 && d_min < d_max))
            throw Error("quantization: require 0 < d_min < d_max");
    }
};

namespace detail {

/// Level value for normalized index t = n/(N-1) and curve parameter beta:
///   d = d_max * exp(ln(d_max/d_min) * (t^beta - 1)).
/// Endpoints are pinned exactly: t=0 -> d_min, t=1 -> d_max.
inline double level_value(const QuantizationConfig& cfg, double t, double beta) {
    if (t <= 0.0) return cfg.d_min;
    if (t >= 1.0) return cfg.d_max;
    const double L = std::log(cfg.d_max / cfg.d_min);
    return cfg.d_max * std::exp(L * (std::pow(t, beta) - 1.0));
}

} // namespace detail

/// Per-pixel inverse-depth quantization curves: channel n of the output holds
/// the n-th sampling level for each pixel's beta. Strictly increasing in n,
/// differentiable w.r.t. beta (endpoint channels have zero beta-gradient).
inline DiffValue quantization_levels(const QuantizationConfig& cfg, DiffValue beta) {
    cfg.validate();
    const Grid& bv = beta.value();
    if (bv.planes() != 1) throw Error("quantization_levels: beta must be a single plane");
    for (std::int64_t i = 0; i < bv.numel(); ++i)
        if (bv[i] <= 0.0) throw Error("quantization_levels: beta must be positive");

    const int N = cfg.levels, H = bv.rows(), W = bv.cols();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const double L = std::log(cfg.d_max / cfg.d_min);
    Grid out = Grid::uninit(Shape{N, H, W});
    for (int n = 0; n < N; ++n) {
        const double t = static_cast<double>(n) / (N - 1);
        for (std::size_t i = 0; i < hw; ++i)
            out[n * hw + i] = detail::level_value(cfg, t, bv[i]);
    }
    int bid = beta.id();
    auto backfn = [bid, cfg, N, hw, L](Tape& tt, int self) {
        const Grid& g = tt.adjoint(self);
        const Grid& b = tt.value(bid);
        const Grid& y = tt.value(self);
        Grid& gb = tt.adj(bid);
        for (int n = 1; n + 1 < N; ++n) {
            const double t = static_cast<double>(n) / (N - 1);
            const double lnt = std::log(t);
            for (std::size_t i = 0; i < hw; ++i) {
                // dy/dbeta = y * L * t^beta * ln(t)
                const double tb = std::pow(t, b[i]);
                gb[i] += g[n * hw + i] * y[n * hw + i] * L * tb * lnt;
            }
        }
    };
    return beta.tape()->record("quantization_levels", std::move(out), backfn, {bid});
}

/// Tape-free variant for fixed beta maps.
inline Grid quantization_levels_grid(const QuantizationConfig& cfg, const Grid& beta) {
    cfg.validate();
    const int N = cfg.levels, H = beta.rows(), W = beta.cols();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Grid out = Grid::uninit(Shape{N, H, W});
    for (int n = 0; n < N; ++n) {
        const double t = static_cast<double>(n) / (N - 1);
        for (std::size_t i = 0; i < hw; ++i)
            out[n * hw + i] = detail::level_value(cfg, t, beta[i]);
    }
    return out;
}

/// Soft disparity estimate: per-pixel dot product of the level volume with
/// the softmaxed logit volume. Output lies in [d_min, d_max].
inline DiffValue aggregate_disparity(DiffValue logits, DiffValue levels) {
    if (logits.shape() != levels.shape())
        throw Error("aggregate_disparity: logits " + logits.shape().str() + " vs levels " +
                    levels.shape().str());
    DiffValue probs = channel_softmax(logits);
    return reduce_planes_sum(mul(probs, levels));
}

} // namespace aqua
