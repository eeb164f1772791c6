#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "aqua/grid.hpp"
#include "aqua/parallel.hpp"

namespace aqua {

class Tape;

/// Handle to a node on a reverse-mode tape. Value is immutable after
/// creation; the adjoint is filled by Tape::backward.
class DiffValue {
public:
    DiffValue() = default;
    DiffValue(Tape* tape, int id) : tape_(tape), id_(id) {}

    int id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

    const Grid& value() const;
    const Grid& adjoint() const;
    const Shape& shape() const;

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

/// Reverse-mode tape over dense grids. Nodes are recorded in topological
/// order by construction; backward visits them in reverse exactly once.
/// Gradients only flow into subgraphs reachable from differentiable inputs;
/// constants never accumulate adjoints. Single-writer: a tape must not be
/// shared between simultaneous fits.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int)>;

    Tape() { nodes_.reserve(512); }

    /// Differentiable leaf (a parameter).
    DiffValue input(Grid v) { return record("input", std::move(v), nullptr, {}, true); }
    /// Non-differentiable leaf; backward work never flows into it.
    DiffValue constant(Grid v) { return record("const", std::move(v), nullptr, {}, false); }
    DiffValue constant(double v) { return constant(Grid::scalar(v)); }

    DiffValue record(const char* opname, Grid value, BackwardFn bwd,
                     std::initializer_list<int> parents, bool force_requires = false) {
        return record(opname, std::move(value), std::move(bwd),
                      std::vector<int>(parents), force_requires);
    }
    DiffValue record(const char* opname, Grid value, BackwardFn bwd, std::vector<int> parents,
                     bool force_requires = false) {
        if (!value.all_finite())
            throw Error(std::string("non-finite values produced by op '") + opname + "'");
        bool req = force_requires;
        for (int p : parents) req = req || nodes_[p].requires_grad;
        nodes_.emplace_back();
        Node& n = nodes_.back();
        n.value = std::move(value);
        n.backward = std::move(bwd);
        n.requires_grad = req;
        return DiffValue(this, static_cast<int>(nodes_.size()) - 1);
    }

    const Grid& value(int id) const { return nodes_[id].value; }
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }

    /// Adjoint grid of a node (zeros if no gradient reached it).
    const Grid& adjoint(int id) {
        ensure_adjoint(id);
        return nodes_[id].adjoint;
    }

    /// Mutable adjoint accumulator; marks the node for the backward sweep.
    Grid& adj(int id) {
        ensure_adjoint(id);
        nodes_[id].dirty = true;
        return nodes_[id].adjoint;
    }

    /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse order.
    void backward(DiffValue loss) {
        if (loss.tape() != this) throw Error("backward: loss from another tape");
        if (!value(loss.id()).shape().is_scalar())
            throw Error("backward: loss must be scalar, got " + value(loss.id()).shape().str());
        if (!std::isfinite(value(loss.id()).as_scalar()))
            throw Error("backward: non-finite loss");
        for (Node& n : nodes_) {
            if (n.adjoint.numel() > 0) n.adjoint = Grid::zeros(n.value.shape());
            n.dirty = false;
        }
        adj(loss.id())[0] = 1.0;
        for (int id = loss.id(); id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.dirty || !n.backward || !n.requires_grad) continue;
            n.backward(*this, id);
        }
    }

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Grid value;
        Grid adjoint; // same shape as value once allocated
        bool dirty = false;
        bool requires_grad = false;
        BackwardFn backward;
    };

    void ensure_adjoint(int id) {
        Node& n = nodes_[id];
        if (n.adjoint.numel() == 0) n.adjoint = Grid::zeros(n.value.shape());
    }

    std::vector<Node> nodes_;
};

inline const Grid& DiffValue::value() const { return tape_->value(id_); }
inline const Grid& DiffValue::adjoint() const { return tape_->adjoint(id_); }
inline const Shape& DiffValue::shape() const { return tape_->value(id_).shape(); }

// ---------------------------------------------------------------------------
// Elementwise operations with scalar/plane broadcasting
// ---------------------------------------------------------------------------

namespace detail {

// fwd(a,b) -> value; bwd(a,b,out) -> {d/da, d/db}
template <typename FwdFn, typename BwdFn>
DiffValue binary_op(const char* name, DiffValue a, DiffValue b, FwdFn fwd, BwdFn bwd) {
    Tape& t = *a.tape();
    if (b.tape() != &t) throw Error(std::string(name) + ": operands from different tapes");
    const Grid& av = a.value();
    const Grid& bv = b.value();
    const Shape sa = av.shape(), sb = bv.shape();
    Shape out = broadcast_shape(sa, sb);
    Grid res = Grid::uninit(out);
    const std::int64_t n = res.numel();
    if (sa == sb) {
        for (std::int64_t i = 0; i < n; ++i) res[i] = fwd(av[i], bv[i]);
    } else {
        std::size_t i = 0;
        for (int p = 0; p < out.planes; ++p)
            for (int r = 0; r < out.rows; ++r)
                for (int c = 0; c < out.cols; ++c, ++i)
                    res[i] = fwd(av[bcast_index(sa, p, r, c)], bv[bcast_index(sb, p, r, c)]);
    }

    int aid = a.id(), bid = b.id();
    auto backfn = [aid, bid, out, sa, sb, bwd](Tape& tt, int self) {
        const Grid& adj_out = tt.adjoint(self);
        const Grid& va = tt.value(aid);
        const Grid& vb = tt.value(bid);
        const Grid& vo = tt.value(self);
        const bool need_a = tt.requires_grad(aid);
        const bool need_b = tt.requires_grad(bid);
        if (!need_a && !need_b) return;
        Grid* ga = need_a ? &tt.adj(aid) : nullptr;
        Grid* gb = need_b ? &tt.adj(bid) : nullptr;
        if (sa == sb) {
            const std::int64_t n2 = vo.numel();
            for (std::int64_t i = 0; i < n2; ++i) {
                auto [da, db] = bwd(va[i], vb[i], vo[i]);
                if (ga) (*ga)[i] += adj_out[i] * da;
                if (gb) (*gb)[i] += adj_out[i] * db;
            }
        } else {
            std::size_t k = 0;
            for (int p = 0; p < out.planes; ++p)
                for (int r = 0; r < out.rows; ++r)
                    for (int c = 0; c < out.cols; ++c, ++k) {
                        auto [da, db] = bwd(va[bcast_index(sa, p, r, c)],
                                            vb[bcast_index(sb, p, r, c)], vo[k]);
                        if (ga) (*ga)[bcast_index(sa, p, r, c)] += adj_out[k] * da;
                        if (gb) (*gb)[bcast_index(sb, p, r, c)] += adj_out[k] * db;
                    }
        }
    };
    return t.record(name, std::move(res), backfn, {aid, bid});
}

template <typename FwdFn, typename BwdFn>
DiffValue unary_op(const char* name, DiffValue a, FwdFn fwd, BwdFn bwd) {
    Tape& t = *a.tape();
    const Grid& av = a.value();
    Grid res = Grid::uninit(av.shape());
    for (std::int64_t i = 0; i < av.numel(); ++i) res[i] = fwd(av[i]);
    int aid = a.id();
    auto backfn = [aid, bwd](Tape& tt, int self) {
        const Grid& adj_out = tt.adjoint(self);
        const Grid& va = tt.value(aid);
        const Grid& vo = tt.value(self);
        Grid& ga = tt.adj(aid);
        for (std::int64_t i = 0; i < va.numel(); ++i) ga[i] += adj_out[i] * bwd(va[i], vo[i]);
    };
    return t.record(name, std::move(res), backfn, {aid});
}

} // namespace detail

inline DiffValue add(DiffValue a, DiffValue b) {
    return detail::binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

inline DiffValue sub(DiffValue a, DiffValue b) {
    return detail::binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

inline DiffValue mul(DiffValue a, DiffValue b) {
    return detail::binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double) { return std::pair<double, double>{y, x}; });
}

inline DiffValue divide(DiffValue a, DiffValue b) {
    for (std::int64_t i = 0; i < b.value().numel(); ++i)
        if (std::abs(b.value()[i]) < 1e-12) throw Error("divide: degenerate divisor");
    return detail::binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y, double o) { return std::pair<double, double>{1.0 / y, -o / y}; });
}

/// Elementwise power. Negative bases require integer exponents; the exponent
/// gradient is defined only for positive bases (zero elsewhere).
inline DiffValue vpow(DiffValue a, DiffValue b) {
    const Grid& av = a.value();
    const Grid& bv = b.value();
    Shape out = broadcast_shape(av.shape(), bv.shape());
    for (int p = 0; p < out.planes; ++p)
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) {
                double base = av[bcast_index(av.shape(), p, r, c)];
                double ex = bv[bcast_index(bv.shape(), p, r, c)];
                if (base < 0.0 && ex != std::floor(ex))
                    throw Error("pow: negative base with non-integer exponent");
                if (base == 0.0 && ex < 0.0) throw Error("pow: zero base with negative exponent");
            }
    return detail::binary_op(
        "pow", a, b, [](double x, double y) { return std::pow(x, y); },
        [](double x, double y, double o) {
            double da, db;
            if (x > 0.0) {
                da = y * o / x;
                db = o * std::log(x);
            } else if (x == 0.0) {
                da = (y == 1.0) ? 1.0 : 0.0;
                db = 0.0;
            } else {
                da = y * std::pow(x, y - 1.0);
                db = 0.0;
            }
            return std::pair<double, double>{da, db};
        });
}

inline DiffValue vexp(DiffValue a) {
    return detail::unary_op(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

inline DiffValue vln(DiffValue a) {
    for (std::int64_t i = 0; i < a.value().numel(); ++i)
        if (a.value()[i] <= 0.0) throw Error("ln: non-positive argument");
    return detail::unary_op(
        "ln", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline DiffValue vabs(DiffValue a) {
    return detail::unary_op(
        "abs", a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline DiffValue clamp(DiffValue a, double lo, double hi) {
    return detail::unary_op(
        "clamp", a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

inline DiffValue vtanh(DiffValue a) {
    return detail::unary_op(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double, double o) { return 1.0 - o * o; });
}

inline DiffValue softplus(DiffValue a) {
    return detail::unary_op(
        "softplus", a,
        [](double x) {
            if (x > 30.0) return x;
            if (x < -30.0) return std::exp(x);
            return std::log1p(std::exp(x));
        },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

inline DiffValue neg(DiffValue a) {
    return detail::unary_op(
        "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

// scalar-constant variants (no extra node for the constant)
inline DiffValue add(DiffValue a, double s) {
    return detail::unary_op(
        "add_s", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}
inline DiffValue mul(DiffValue a, double s) {
    return detail::unary_op(
        "mul_s", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}
inline DiffValue vpow(DiffValue a, double s) {
    for (std::int64_t i = 0; i < a.value().numel(); ++i) {
        double base = a.value()[i];
        if (base < 0.0 && s != std::floor(s))
            throw Error("pow: negative base with non-integer exponent");
        if (base == 0.0 && s < 0.0) throw Error("pow: zero base with negative exponent");
    }
    return detail::unary_op(
        "pow_s", a, [s](double x) { return std::pow(x, s); },
        [s](double x, double o) {
            if (x > 0.0) return s * o / x;
            if (x == 0.0) return (s == 1.0) ? 1.0 : 0.0;
            return s * std::pow(x, s - 1.0);
        });
}

inline DiffValue operator+(DiffValue a, DiffValue b) { return add(a, b); }
inline DiffValue operator-(DiffValue a, DiffValue b) { return sub(a, b); }
inline DiffValue operator*(DiffValue a, DiffValue b) { return mul(a, b); }
inline DiffValue operator/(DiffValue a, DiffValue b) { return divide(a, b); }
inline DiffValue operator+(DiffValue a, double s) { return add(a, s); }
inline DiffValue operator+(double s, DiffValue a) { return add(a, s); }
inline DiffValue operator-(DiffValue a, double s) { return add(a, -s); }
inline DiffValue operator-(double s, DiffValue a) { return add(neg(a), s); }
inline DiffValue operator*(DiffValue a, double s) { return mul(a, s); }
inline DiffValue operator*(double s, DiffValue a) { return mul(a, s); }
inline DiffValue operator/(DiffValue a, double s) { return mul(a, 1.0 / s); }

// ---------------------------------------------------------------------------
// Softmax over the plane dimension
// ---------------------------------------------------------------------------

/// Per-pixel softmax across planes, stabilized by max subtraction.
inline DiffValue channel_softmax(DiffValue logits) {
    const Grid& lv = logits.value();
    const Shape s = lv.shape();
    if (s.planes < 2) throw Error("channel_softmax: need at least 2 planes");
    Grid out = Grid::uninit(s);
    const std::size_t hw = static_cast<std::size_t>(s.rows) * s.cols;
    for (std::size_t px = 0; px < hw; ++px) {
        double m = lv[px];
        for (int n = 1; n < s.planes; ++n) m = std::max(m, lv[n * hw + px]);
        double z = 0.0;
        for (int n = 0; n < s.planes; ++n) {
            double e = std::exp(lv[n * hw + px] - m);
            out[n * hw + px] = e;
            z += e;
        }
        for (int n = 0; n < s.planes; ++n) out[n * hw + px] /= z;
    }
    int lid = logits.id();
    auto backfn = [lid, s, hw](Tape& tt, int self) {
        const Grid& adj_out = tt.adjoint(self);
        const Grid& y = tt.value(self);
        Grid& gl = tt.adj(lid);
        for (std::size_t px = 0; px < hw; ++px) {
            double dot = 0.0;
            for (int n = 0; n < s.planes; ++n) dot += adj_out[n * hw + px] * y[n * hw + px];
            for (int n = 0; n < s.planes; ++n)
                gl[n * hw + px] += y[n * hw + px] * (adj_out[n * hw + px] - dot);
        }
    };
    return logits.tape()->record("channel_softmax", std::move(out), backfn, {lid});
}

// ---------------------------------------------------------------------------
// Bilinear sampling
// ---------------------------------------------------------------------------

struct BilinearSample {
    DiffValue values; ///< (C, Ht, Wt), zero where the footprint leaves the source
    Grid validity;    ///< (1, Ht, Wt) binary: 1 when (x, y) lies inside the source rect
};

/// Samples `src` at continuous pixel coordinates (coords plane 0 = x, plane 1
/// = y). Out-of-bounds taps read zero. Gradients flow to both the source
/// values and the coordinates.
inline BilinearSample bilinear_sample(DiffValue src, DiffValue coords) {
    Tape& t = *src.tape();
    const Grid& sv = src.value();
    const Grid& cv = coords.value();
    if (cv.planes() != 2) throw Error("bilinear_sample: coords must have 2 planes (x, y)");
    const int C = sv.planes(), H = sv.rows(), W = sv.cols();
    const int Ht = cv.rows(), Wt = cv.cols();
    const std::size_t hw_out = static_cast<std::size_t>(Ht) * Wt;
    const std::size_t hw_src = static_cast<std::size_t>(H) * W;

    Grid out = Grid::uninit(Shape{C, Ht, Wt});
    Grid validity = Grid::uninit(Shape{1, Ht, Wt});
    const double* xs = cv.data();
    const double* ys = cv.data() + hw_out;

    auto row_kernel = [&](int r) {
        for (int c = 0; c < Wt; ++c) {
            const std::size_t px = static_cast<std::size_t>(r) * Wt + c;
            const double x = xs[px], y = ys[px];
            validity[px] = (x >= 0.0 && x <= W - 1 && y >= 0.0 && y <= H - 1) ? 1.0 : 0.0;
            const int x0 = static_cast<int>(std::floor(x));
            const int y0 = static_cast<int>(std::floor(y));
            const double fx = x - x0, fy = y - y0;
            const bool in_x0 = x0 >= 0 && x0 < W, in_x1 = x0 + 1 >= 0 && x0 + 1 < W;
            const bool in_y0 = y0 >= 0 && y0 < H, in_y1 = y0 + 1 >= 0 && y0 + 1 < H;
            const double w00 = (1.0 - fy) * (1.0 - fx), w10 = (1.0 - fy) * fx;
            const double w01 = fy * (1.0 - fx), w11 = fy * fx;
            const std::size_t base0 = static_cast<std::size_t>(y0) * W + x0;
            for (int ch = 0; ch < C; ++ch) {
                const double* plane = sv.data() + ch * hw_src;
                double acc = 0.0;
                if (in_x0 && in_y0) acc += w00 * plane[base0];
                if (in_x1 && in_y0) acc += w10 * plane[base0 + 1];
                if (in_x0 && in_y1) acc += w01 * plane[base0 + W];
                if (in_x1 && in_y1) acc += w11 * plane[base0 + W + 1];
                out[ch * hw_out + px] = acc;
            }
        }
    };
    parallel_for(Ht, static_cast<std::int64_t>(Wt) * (C + 1) * 8, row_kernel);

    int sid = src.id(), cid = coords.id();
    auto backfn = [sid, cid, C, H, W, Ht, Wt, hw_out, hw_src](Tape& tt, int self) {
        const Grid& adj_out = tt.adjoint(self);
        const Grid& sv2 = tt.value(sid);
        const Grid& cv2 = tt.value(cid);
        const bool need_src = tt.requires_grad(sid);
        const bool need_coords = tt.requires_grad(cid);
        if (!need_src && !need_coords) return;
        Grid* gsrc = need_src ? &tt.adj(sid) : nullptr;
        Grid* gcoords = need_coords ? &tt.adj(cid) : nullptr;
        const double* xs2 = cv2.data();
        const double* ys2 = cv2.data() + hw_out;
        for (std::size_t px = 0; px < hw_out; ++px) {
            const double x = xs2[px], y = ys2[px];
            const int x0 = static_cast<int>(std::floor(x));
            const int y0 = static_cast<int>(std::floor(y));
            const double fx = x - x0, fy = y - y0;
            const bool in_x0 = x0 >= 0 && x0 < W, in_x1 = x0 + 1 >= 0 && x0 + 1 < W;
            const bool in_y0 = y0 >= 0 && y0 < H, in_y1 = y0 + 1 >= 0 && y0 + 1 < H;
            if (!((in_x0 || in_x1) && (in_y0 || in_y1))) continue;
            const double w00 = (1.0 - fy) * (1.0 - fx), w10 = (1.0 - fy) * fx;
            const double w01 = fy * (1.0 - fx), w11 = fy * fx;
            const std::size_t base0 = static_cast<std::size_t>(y0) * W + x0;
            double gx = 0.0, gy = 0.0;
            for (int ch = 0; ch < C; ++ch) {
                const double g = adj_out[ch * hw_out + px];
                if (g == 0.0) continue;
                const double* plane = sv2.data() + ch * hw_src;
                const double v00 = (in_x0 && in_y0) ? plane[base0] : 0.0;
                const double v10 = (in_x1 && in_y0) ? plane[base0 + 1] : 0.0;
                const double v01 = (in_x0 && in_y1) ? plane[base0 + W] : 0.0;
                const double v11 = (in_x1 && in_y1) ? plane[base0 + W + 1] : 0.0;
                if (gsrc) {
                    double* gplane = gsrc->data() + ch * hw_src;
                    if (in_x0 && in_y0) gplane[base0] += g * w00;
                    if (in_x1 && in_y0) gplane[base0 + 1] += g * w10;
                    if (in_x0 && in_y1) gplane[base0 + W] += g * w01;
                    if (in_x1 && in_y1) gplane[base0 + W + 1] += g * w11;
                }
                gx += g * ((1.0 - fy) * (v10 - v00) + fy * (v11 - v01));
                gy += g * ((1.0 - fx) * (v01 - v00) + fx * (v11 - v10));
            }
            if (gcoords) {
                (*gcoords)[px] += gx;
                (*gcoords)[hw_out + px] += gy;
            }
        }
    };
    DiffValue values = t.record("bilinear_sample", std::move(out), backfn, {sid, cid});
    return {values, std::move(validity)};
}

// ---------------------------------------------------------------------------
// Reductions and structure ops
// ---------------------------------------------------------------------------

inline DiffValue reduce_sum(DiffValue a) {
    const Grid& av = a.value();
    double s = 0.0;
    for (std::int64_t i = 0; i < av.numel(); ++i) s += av[i];
    int aid = a.id();
    auto backfn = [aid](Tape& tt, int self) {
        double g = tt.adjoint(self)[0];
        Grid& ga = tt.adj(aid);
        for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    };
    return a.tape()->record("reduce_sum", Grid::scalar(s), backfn, {aid});
}

inline DiffValue reduce_mean(DiffValue a) {
    return mul(reduce_sum(a), 1.0 / static_cast<double>(a.value().numel()));
}

/// Sums a plane stack down to a single plane.
inline DiffValue reduce_planes_sum(DiffValue a) {
    const Grid& av = a.value();
    const Shape s = av.shape();
    const std::size_t hw = static_cast<std::size_t>(s.rows) * s.cols;
    Grid out(Shape{1, s.rows, s.cols});
    for (int n = 0; n < s.planes; ++n)
        for (std::size_t i = 0; i < hw; ++i) out[i] += av[n * hw + i];
    int aid = a.id();
    auto backfn = [aid, s, hw](Tape& tt, int self) {
        const Grid& g = tt.adjoint(self);
        Grid& ga = tt.adj(aid);
        for (int n = 0; n < s.planes; ++n)
            for (std::size_t i = 0; i < hw; ++i) ga[n * hw + i] += g[i];
    };
    return a.tape()->record("reduce_planes_sum", std::move(out), backfn, {aid});
}

/// Copies `count` consecutive planes starting at `first`.
inline DiffValue slice_planes(DiffValue a, int first, int count) {
    const Grid& av = a.value();
    const Shape s = av.shape();
    if (first < 0 || count < 1 || first + count > s.planes)
        throw Error("slice_planes: range out of bounds");
    const std::size_t hw = static_cast<std::size_t>(s.rows) * s.cols;
    Grid out = Grid::uninit(Shape{count, s.rows, s.cols});
    for (std::size_t i = 0; i < count * hw; ++i) out[i] = av[first * hw + i];
    int aid = a.id();
    auto backfn = [aid, first, count, hw](Tape& tt, int self) {
        const Grid& g = tt.adjoint(self);
        Grid& ga = tt.adj(aid);
        for (std::size_t i = 0; i < count * hw; ++i) ga[first * hw + i] += g[i];
    };
    return a.tape()->record("slice_planes", std::move(out), backfn, {aid});
}

inline DiffValue slice_plane(DiffValue a, int n) { return slice_planes(a, n, 1); }

inline DiffValue concat_planes(const std::vector<DiffValue>& parts) {
    if (parts.empty()) throw Error("concat_planes: empty input");
    Tape& t = *parts[0].tape();
    const int rows = parts[0].value().rows(), cols = parts[0].value().cols();
    int total = 0;
    for (const DiffValue& p : parts) {
        if (p.value().rows() != rows || p.value().cols() != cols)
            throw Error("concat_planes: mismatched plane sizes");
        total += p.value().planes();
    }
    Grid out = Grid::uninit(Shape{total, rows, cols});
    const std::size_t hw = static_cast<std::size_t>(rows) * cols;
    std::size_t off = 0;
    std::vector<int> ids;
    std::vector<int> counts;
    for (const DiffValue& p : parts) {
        const Grid& pv = p.value();
        for (std::int64_t i = 0; i < pv.numel(); ++i) out[off + i] = pv[i];
        off += static_cast<std::size_t>(pv.numel());
        ids.push_back(p.id());
        counts.push_back(pv.planes());
    }
    auto backfn = [ids, counts, hw](Tape& tt, int self) {
        const Grid& g = tt.adjoint(self);
        std::size_t o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::size_t n = counts[k] * hw;
            if (tt.requires_grad(ids[k])) {
                Grid& gp = tt.adj(ids[k]);
                for (std::size_t i = 0; i < n; ++i) gp[i] += g[o + i];
            }
            o += n;
        }
    };
    return t.record("concat_planes", std::move(out), backfn, ids);
}

/// Per-pixel weighted sum of N plane images by an (N, H, W) weight volume:
/// out(ch, p) = sum_n weights(n, p) * planes[n](ch, p).
inline DiffValue probability_blend(DiffValue weights, const std::vector<DiffValue>& planes) {
    Tape& t = *weights.tape();
    const Grid& wv = weights.value();
    const int N = wv.planes();
    if (static_cast<int>(planes.size()) != N)
        throw Error("probability_blend: weight planes and image count differ");
    const int C = planes[0].value().planes();
    const int H = wv.rows(), W = wv.cols();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    std::vector<int> ids{weights.id()};
    for (const DiffValue& p : planes) {
        if (p.value().planes() != C || p.value().rows() != H || p.value().cols() != W)
            throw Error("probability_blend: plane shape mismatch");
        ids.push_back(p.id());
    }
    Grid out(Shape{C, H, W});
    for (int n = 0; n < N; ++n) {
        const Grid& pv = planes[n].value();
        const double* w = wv.data() + n * hw;
        for (int ch = 0; ch < C; ++ch) {
            double* o = out.data() + ch * hw;
            const double* v = pv.data() + ch * hw;
            for (std::size_t i = 0; i < hw; ++i) o[i] += w[i] * v[i];
        }
    }
    auto backfn = [ids, N, C, hw](Tape& tt, int self) {
        const Grid& g = tt.adjoint(self);
        const int wid = ids[0];
        const Grid& wv2 = tt.value(wid);
        const bool need_w = tt.requires_grad(wid);
        Grid* gw = need_w ? &tt.adj(wid) : nullptr;
        for (int n = 0; n < N; ++n) {
            const int pid = ids[n + 1];
            const Grid& pv = tt.value(pid);
            const bool need_p = tt.requires_grad(pid);
            Grid* gp = need_p ? &tt.adj(pid) : nullptr;
            if (!need_p && !need_w) continue;
            const double* w = wv2.data() + n * hw;
            for (int ch = 0; ch < C; ++ch) {
                const double* gout = g.data() + ch * hw;
                const double* v = pv.data() + ch * hw;
                double* gwn = gw ? gw->data() + n * hw : nullptr;
                double* gpn = gp ? gp->data() + ch * hw : nullptr;
                for (std::size_t i = 0; i < hw; ++i) {
                    if (gwn) gwn[i] += gout[i] * v[i];
                    if (gpn) gpn[i] += gout[i] * w[i];
                }
            }
        }
    };
    return t.record("probability_blend", std::move(out), backfn, ids);
}

/// Forward difference along columns: out(p,r,c) = a(p,r,c+1) - a(p,r,c).
inline DiffValue diff_x(DiffValue a) {
    const Grid& av = a.value();
    const Shape s = av.shape();
    if (s.cols < 2) throw Error("diff_x: need at least 2 columns");
    Grid out = Grid::uninit(Shape{s.planes, s.rows, s.cols - 1});
    for (int p = 0; p < s.planes; ++p)
        for (int r = 0; r < s.rows; ++r)
            for (int c = 0; c + 1 < s.cols; ++c)
                out.at(p, r, c) = av.at(p, r, c + 1) - av.at(p, r, c);
    int aid = a.id();
    auto backfn = [aid, s](Tape& tt, int self) {
        const Grid& g = tt.adjoint(self);
        Grid& ga = tt.adj(aid);
        for (int p = 0; p < s.planes; ++p)
            for (int r = 0; r < s.rows; ++r)
                for (int c = 0; c + 1 < s.cols; ++c) {
                    ga.at(p, r, c + 1) += g.at(p, r, c);
                    ga.at(p, r, c) -= g.at(p, r, c);
                }
    };
    return a.tape()->record("diff_x", std::move(out), backfn, {aid});
}

/// Forward difference along rows: out(p,r,c) = a(p,r+1,c) - a(p,r,c).
inline DiffValue diff_y(DiffValue a) {
    const Grid& av = a.value();
    const Shape s = av.shape();
    if (s.rows < 2) throw Error("diff_y: need at least 2 rows");
    Grid out = Grid::uninit(Shape{s.planes, s.rows - 1, s.cols});
    for (int p = 0; p < s.planes; ++p)
        for (int r = 0; r + 1 < s.rows; ++r)
            for (int c = 0; c < s.cols; ++c)
                out.at(p, r, c) = av.at(p, r + 1, c) - av.at(p, r, c);
    int aid = a.id();
    auto backfn = [aid, s](Tape& tt, int self) {
        const Grid& g = tt.adjoint(self);
        Grid& ga = tt.adj(aid);
        for (int p = 0; p < s.planes; ++p)
            for (int r = 0; r + 1 < s.rows; ++r)
                for (int c = 0; c < s.cols; ++c) {
                    ga.at(p, r + 1, c) += g.at(p, r, c);
                    ga.at(p, r, c) -= g.at(p, r, c);
                }
    };
    return a.tape()->record("diff_y", std::move(out), backfn, {aid});
}

// ---------------------------------------------------------------------------
// Fixed-weight strided convolution (for the perceptual feature pyramid)
// ---------------------------------------------------------------------------

struct ConvKernel {
    int out_c = 0, in_c = 0, k = 0;
    std::vector<double> w; // (out_c, in_c, k, k)

    double& at(int oc, int ic, int ky, int kx) {
        return w[((static_cast<std::size_t>(oc) * in_c + ic) * k + ky) * k + kx];
    }
    double at(int oc, int ic, int ky, int kx) const {
        return w[((static_cast<std::size_t>(oc) * in_c + ic) * k + ky) * k + kx];
    }
};

/// 2-D convolution with constant weights and zero padding; differentiable
/// w.r.t. the input only.
inline DiffValue conv2d(DiffValue input, const ConvKernel& kernel, int stride, int pad) {
    const Grid& iv = input.value();
    const int C = iv.planes(), H = iv.rows(), W = iv.cols();
    if (C != kernel.in_c) throw Error("conv2d: channel mismatch");
    const int OH = (H + 2 * pad - kernel.k) / stride + 1;
    const int OW = (W + 2 * pad - kernel.k) / stride + 1;
    if (OH < 1 || OW < 1) throw Error("conv2d: output would be empty");
    Grid out = Grid::uninit(Shape{kernel.out_c, OH, OW});
    auto kern = [&](int oc) {
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                double acc = 0.0;
                for (int ic = 0; ic < C; ++ic)
                    for (int ky = 0; ky < kernel.k; ++ky) {
                        const int y = oy * stride - pad + ky;
                        if (y < 0 || y >= H) continue;
                        for (int kx = 0; kx < kernel.k; ++kx) {
                            const int x = ox * stride - pad + kx;
                            if (x < 0 || x >= W) continue;
                            acc += kernel.at(oc, ic, ky, kx) * iv.at(ic, y, x);
                        }
                    }
                out.at(oc, oy, ox) = acc;
            }
    };
    parallel_for(kernel.out_c, static_cast<std::int64_t>(OH) * OW * C * kernel.k * kernel.k * 2,
                 kern);
    int iid = input.id();
    ConvKernel kcopy = kernel;
    auto backfn = [iid, kcopy, C, H, W, OH, OW, stride, pad](Tape& tt, int self) {
        const Grid& g = tt.adjoint(self);
        Grid& gi = tt.adj(iid);
        for (int oc = 0; oc < kcopy.out_c; ++oc)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    const double gv = g.at(oc, oy, ox);
                    if (gv == 0.0) continue;
                    for (int ic = 0; ic < C; ++ic)
                        for (int ky = 0; ky < kcopy.k; ++ky) {
                            const int y = oy * stride - pad + ky;
                            if (y < 0 || y >= H) continue;
                            for (int kx = 0; kx < kcopy.k; ++kx) {
                                const int x = ox * stride - pad + kx;
                                if (x < 0 || x >= W) continue;
                                gi.at(ic, y, x) += gv * kcopy.at(oc, ic, ky, kx);
                            }
                        }
                }
    };
    return input.tape()->record("conv2d", std::move(out), backfn, {iid});
}

} // namespace aqua
