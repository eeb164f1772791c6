#pragma once

#include <algorithm>
#include <vector>

#include "aqua/grid.hpp"

namespace aqua {

/// Standard depth evaluation metrics over valid pixels.
struct EigenMetrics {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rmse = 0.0;
    double rmse_log = 0.0;
    double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;
    std::int64_t n_valid = 0;
};

namespace detail {

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace detail

/// Computes abs rel, sq rel, rmse, rmse_log and the delta < 1.25^k accuracy
/// fractions over valid pixels. Depths are capped to [1e-3, cap]; when
/// `median_scale` is set the prediction is multiplied by
/// median(gt)/median(pred) first (the usual treatment for scale-ambiguous
/// video-trained models).
inline EigenMetrics eigen_metrics(const Grid& pred_depth, const Grid& gt_depth,
                                  const Grid* valid_mask = nullptr, double cap = 80.0,
                                  bool median_scale = false) {
    if (pred_depth.shape() != gt_depth.shape())
        throw Error("metrics: pred and gt shapes differ");
    if (valid_mask && valid_mask->shape() != gt_depth.shape())
        throw Error("metrics: mask shape differs");

    std::vector<double> pred, gt;
    for (std::int64_t i = 0; i < gt_depth.numel(); ++i) {
        if (valid_mask && (*valid_mask)[i] < 0.5) continue;
        if (gt_depth[i] <= 0.0) continue;
        if (pred_depth[i] <= 0.0) throw Error("metrics: non-positive predicted depth");
        pred.push_back(pred_depth[i]);
        gt.push_back(gt_depth[i]);
    }
    if (pred.empty()) throw Error("metrics: empty valid mask");

    double scale = 1.0;
    if (median_scale) scale = detail::median_of(gt) / detail::median_of(pred);

    EigenMetrics m;
    m.n_valid = static_cast<std::int64_t>(pred.size());
    const double lo = 1e-3;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::min(std::max(pred[i] * scale, lo), cap);
        const double g = std::min(std::max(gt[i], lo), cap);
        const double diff = p - g;
        m.abs_rel += std::abs(diff) / g;
        m.sq_rel += diff * diff / g;
        m.rmse += diff * diff;
        const double dl = std::log(p) - std::log(g);
        m.rmse_log += dl * dl;
        const double ratio = std::max(p / g, g / p);
        if (ratio < 1.25) m.delta1 += 1.0;
        if (ratio < 1.25 * 1.25) m.delta2 += 1.0;
        if (ratio < 1.25 * 1.25 * 1.25) m.delta3 += 1.0;
    }
    const double n = static_cast<double>(pred.size());
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.rmse = std::sqrt(m.rmse / n);
    m.rmse_log = std::sqrt(m.rmse_log / n);
    m.delta1 /= n;
    m.delta2 /= n;
    m.delta3 /= n;
    return m;
}

} // namespace aqua
