#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace aqua {

/// Domain error raised by all numerical and I/O failure paths.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Shape of a dense grid: `planes` x `rows` x `cols`.
/// Scalars are (1,1,1), H x W fields are (1,H,W), plane stacks are (N,H,W)
/// and color images are stored planar as (3,H,W).
struct Shape {
    int planes = 1;
    int rows = 1;
    int cols = 1;

    bool operator==(const Shape& o) const {
        return planes == o.planes && rows == o.rows && cols == o.cols;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::int64_t numel() const {
        return static_cast<std::int64_t>(planes) * rows * cols;
    }
    bool is_scalar() const { return planes == 1 && rows == 1 && cols == 1; }

    std::string str() const {
        return std::to_string(planes) + "x" + std::to_string(rows) + "x" + std::to_string(cols);
    }
};

namespace detail {

/// Allocator whose default-construct is a no-op, so vector resize skips the
/// zero fill. Values are indistinguishable from a plain vector once written.
template <typename T>
struct uninit_alloc : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = uninit_alloc<U>;
    };
    template <typename U>
    void construct(U* p) noexcept {
        ::new (static_cast<void*>(p)) U;
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

} // namespace detail

/// Dense double-precision grid with value semantics. Row-major layout,
/// index = (plane * rows + row) * cols + col.
class Grid {
public:
    using Storage = std::vector<double, detail::uninit_alloc<double>>;

    Grid() = default;
    explicit Grid(Shape s, double fill = 0.0) : shape_(s) {
        if (s.planes < 1 || s.rows < 1 || s.cols < 1)
            throw Error("Grid: invalid shape " + s.str());
        data_.assign(static_cast<std::size_t>(s.numel()), fill);
    }
    Grid(Shape s, std::vector<double> data) : shape_(s) {
        if (static_cast<std::int64_t>(data.size()) != s.numel())
            throw Error("Grid: data size does not match shape " + s.str());
        data_.assign(data.begin(), data.end());
    }

    static Grid scalar(double v) { return Grid(Shape{1, 1, 1}, v); }
    static Grid zeros(Shape s) { return Grid(s, 0.0); }
    static Grid full(Shape s, double v) { return Grid(s, v); }
    /// Allocation without the zero fill, for outputs written in full.
    static Grid uninit(Shape s) {
        Grid g;
        if (s.planes < 1 || s.rows < 1 || s.cols < 1)
            throw Error("Grid: invalid shape " + s.str());
        g.shape_ = s;
        g.data_.resize(static_cast<std::size_t>(s.numel()));
        return g;
    }

    const Shape& shape() const { return shape_; }
    int planes() const { return shape_.planes; }
    int rows() const { return shape_.rows; }
    int cols() const { return shape_.cols; }
    std::int64_t numel() const { return shape_.numel(); }

    double& at(int p, int r, int c) {
        return data_[(static_cast<std::size_t>(p) * shape_.rows + r) * shape_.cols + c];
    }
    double at(int p, int r, int c) const {
        return data_[(static_cast<std::size_t>(p) * shape_.rows + r) * shape_.cols + c];
    }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    Storage& vec() { return data_; }
    const Storage& vec() const { return data_; }

    double as_scalar() const {
        if (!shape_.is_scalar()) throw Error("Grid: as_scalar on non-scalar grid " + shape_.str());
        return data_[0];
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double min() const {
        double m = data_[0];
        for (double v : data_) m = std::min(m, v);
        return m;
    }
    double max() const {
        double m = data_[0];
        for (double v : data_) m = std::max(m, v);
        return m;
    }
    double sum() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }
    double mean() const { return sum() / static_cast<double>(data_.size()); }

private:
    Shape shape_{0, 0, 0}; // default-constructed grids are empty
    Storage data_;
};

/// True when `a` may be combined elementwise with an output of shape `b`:
/// identical shapes, a scalar, or a single-plane grid broadcast across planes.
inline bool broadcastable(const Shape& a, const Shape& b) {
    if (a == b) return true;
    if (a.is_scalar() || b.is_scalar()) return true;
    if (a.planes == 1 && a.rows == b.rows && a.cols == b.cols) return true;
    if (b.planes == 1 && b.rows == a.rows && b.cols == a.cols) return true;
    return false;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    if (!broadcastable(a, b))
        throw Error("shapes not broadcastable: " + a.str() + " vs " + b.str());
    Shape out;
    out.planes = std::max(a.planes, b.planes);
    out.rows = std::max(a.rows, b.rows);
    out.cols = std::max(a.cols, b.cols);
    return out;
}

/// Maps an output coordinate to the flat index inside a (possibly broadcast) input.
inline std::size_t bcast_index(const Shape& s, int p, int r, int c) {
    int pp = s.planes == 1 ? 0 : p;
    int rr = s.rows == 1 ? 0 : r;
    int cc = s.cols == 1 ? 0 : c;
    return (static_cast<std::size_t>(pp) * s.rows + rr) * s.cols + cc;
}

/// Deterministic random source. Draws raw bits from mt19937_64 so sequences
/// do not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        // Box-Muller on portable uniforms
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return mean + stddev * r * std::cos(a);
    }
    std::uint64_t bits() { return eng_(); }

    Grid uniform_grid(Shape s, double lo, double hi) {
        Grid g(s);
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = uniform(lo, hi);
        return g;
    }
    Grid normal_grid(Shape s, double mean = 0.0, double stddev = 1.0) {
        Grid g(s);
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = normal(mean, stddev);
        return g;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace aqua
