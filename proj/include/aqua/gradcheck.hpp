#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aqua/tape.hpp"

namespace aqua {

/// Builds a scalar loss from parameters already registered on the tape.
/// Must be a pure function of the parameter values.
using LossBuilder = std::function<DiffValue(Tape&, const std::vector<DiffValue>&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    int worst_param = -1;
    std::int64_t worst_entry = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

namespace detail {

inline double eval_loss(const LossBuilder& build, const std::vector<Grid>& params) {
    Tape t;
    std::vector<DiffValue> xs;
    xs.reserve(params.size());
    for (const Grid& g : params) xs.push_back(t.input(g));
    DiffValue loss = build(t, xs);
    double v = loss.value().as_scalar();
    if (!std::isfinite(v)) throw Error("check_gradients: non-finite loss");
    return v;
}

} // namespace detail

/// Compares analytic adjoints against central finite differences, one entry
/// at a time, in double precision. Returns the max over entries of
/// |g_a - g_fd| / max(1, |g_a|, |g_fd|).
inline GradCheckReport check_gradients(const LossBuilder& build, const std::vector<Grid>& params,
                                       double h = 1e-6) {
    // analytic pass
    Tape t;
    std::vector<DiffValue> xs;
    xs.reserve(params.size());
    for (const Grid& g : params) xs.push_back(t.input(g));
    DiffValue loss = build(t, xs);
    if (!std::isfinite(loss.value().as_scalar())) throw Error("check_gradients: non-finite loss");
    t.backward(loss);
    std::vector<Grid> analytic;
    analytic.reserve(params.size());
    for (const DiffValue& x : xs) analytic.push_back(x.adjoint());

    GradCheckReport rep;
    std::vector<Grid> work = params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (std::int64_t e = 0; e < params[pi].numel(); ++e) {
            const double orig = work[pi][e];
            work[pi][e] = orig + h;
            const double fp = detail::eval_loss(build, work);
            work[pi][e] = orig - h;
            const double fm = detail::eval_loss(build, work);
            work[pi][e] = orig;
            const double g_fd = (fp - fm) / (2.0 * h);
            const double g_a = analytic[pi][e];
            const double err =
                std::abs(g_a - g_fd) / std::max({1.0, std::abs(g_a), std::abs(g_fd)});
            if (err > rep.max_rel_err) {
                rep.max_rel_err = err;
                rep.worst_param = static_cast<int>(pi);
                rep.worst_entry = e;
                rep.analytic = g_a;
                rep.numeric = g_fd;
            }
        }
    }
    return rep;
}

} // namespace aqua
