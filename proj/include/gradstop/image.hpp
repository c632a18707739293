#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gradstop/rng.hpp"

namespace gradstop {

// 2D scalar field, row-major, nominal range [0,1]. Values may leave [0,1]
// during flow evolution; only file export clamps.
class Image {
public:
    Image() = default;

    Image(int width, int height, double fill = 0.0)
        : width_(width), height_(height) {
        if (width < 1 || height < 1)
            throw std::invalid_argument("Image: dimensions must be >= 1");
        data_.assign(static_cast<std::size_t>(width) * height, fill);
    }

    Image(int width, int height, std::vector<double> data)
        : width_(width), height_(height), data_(std::move(data)) {
        if (width < 1 || height < 1)
            throw std::invalid_argument("Image: dimensions must be >= 1");
        if (data_.size() != static_cast<std::size_t>(width) * height)
            throw std::invalid_argument("Image: data length != width*height");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& px(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    double px(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_size(const Image& o) const { return width_ == o.width_ && height_ == o.height_; }

    Image& operator+=(const Image& o) {
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Image& operator-=(const Image& o) {
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Image& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

inline Image operator+(Image a, const Image& b) { return a += b; }
inline Image operator-(Image a, const Image& b) { return a -= b; }
inline Image operator*(double s, Image a) { return a *= s; }

// y += a*x
inline void axpy(double a, const Image& x, Image& y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double dot(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sq_norm(const Image& a) { return dot(a, a); }
inline double l2_norm(const Image& a) { return std::sqrt(sq_norm(a)); }

inline bool all_finite(const Image& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

// Square convolution filter with an odd side length.
class Filter {
public:
    Filter() = default;

    explicit Filter(int size, double fill = 0.0) : size_(size) {
        if (size < 1 || size % 2 == 0)
            throw std::invalid_argument("Filter: size must be odd and >= 1");
        taps_.assign(static_cast<std::size_t>(size) * size, fill);
    }

    static Filter delta(int size) {
        Filter f(size);
        f.tap(size / 2, size / 2) = 1.0;
        return f;
    }

    int size() const { return size_; }
    int radius() const { return size_ / 2; }
    std::size_t tap_count() const { return taps_.size(); }

    double& tap(int row, int col) { return taps_[static_cast<std::size_t>(row) * size_ + col]; }
    double tap(int row, int col) const { return taps_[static_cast<std::size_t>(row) * size_ + col]; }

    double& operator[](std::size_t i) { return taps_[i]; }
    double operator[](std::size_t i) const { return taps_[i]; }

    double* taps() { return taps_.data(); }
    const double* taps() const { return taps_.data(); }

    double tap_sum() const {
        double s = 0.0;
        for (double t : taps_) s += t;
        return s;
    }
    double frob_norm() const {
        double s = 0.0;
        for (double t : taps_) s += t * t;
        return std::sqrt(s);
    }

private:
    int size_ = 0;
    std::vector<double> taps_;
};

enum class BoundaryRule { SymmetricReflect, ZeroPad };

namespace detail {

// Half-sample symmetric reflection: -1 -> 0, n -> n-1, period 2n.
inline int reflect_index(int i, int n) {
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return (m < n) ? m : period - 1 - m;
}

// Index map for one axis covering [-r, n-1+r]; -1 marks "outside" (zero pad).
inline std::vector<int> boundary_map(int n, int r, BoundaryRule rule) {
    std::vector<int> map(static_cast<std::size_t>(n) + 2 * r);
    for (int i = -r; i < n + r; ++i) {
        int v;
        if (i >= 0 && i < n) v = i;
        else if (rule == BoundaryRule::SymmetricReflect) v = reflect_index(i, n);
        else v = -1;
        map[static_cast<std::size_t>(i + r)] = v;
    }
    return map;
}

}  // namespace detail

// Correlation-style application of the kernel matrix K to the image:
// out(x,y) = sum_{dy,dx} taps(dy+r, dx+r) * in(x+dx, y+dy), boundary-mapped.
inline Image conv2d(const Image& img, const Filter& f, BoundaryRule rule = BoundaryRule::SymmetricReflect) {
    if (img.empty()) throw std::invalid_argument("conv2d: empty image");
    const int w = img.width(), h = img.height(), r = f.radius(), k = f.size();
    const auto mapx = detail::boundary_map(w, r, rule);
    const auto mapy = detail::boundary_map(h, r, rule);
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        const bool y_inner = (y >= r && y < h - r);
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            if (y_inner && x >= r && x < w - r) {
                const double* base = img.data() + static_cast<std::size_t>(y - r) * w + (x - r);
                const double* tp = f.taps();
                for (int dy = 0; dy < k; ++dy, base += w, tp += k)
                    for (int dx = 0; dx < k; ++dx) acc += tp[dx] * base[dx];
            } else {
                for (int dy = 0; dy < k; ++dy) {
                    const int sy = mapy[static_cast<std::size_t>(y + dy)];
                    if (sy < 0) continue;
                    const double* row = img.data() + static_cast<std::size_t>(sy) * w;
                    for (int dx = 0; dx < k; ++dx) {
                        const int sx = mapx[static_cast<std::size_t>(x + dx)];
                        if (sx < 0) continue;
                        acc += f.tap(dy, dx) * row[sx];
                    }
                }
            }
            out.px(x, y) = acc;
        }
    }
    return out;
}

// Exact adjoint of conv2d under the same boundary rule: the scatter of the
// forward gather, so <conv2d(x,f), y> = <x, conv2d_adjoint(y,f)> identically.
// (A flipped-kernel convolution would be wrong at the boundary.)
inline Image conv2d_adjoint(const Image& resp, const Filter& f, BoundaryRule rule = BoundaryRule::SymmetricReflect) {
    if (resp.empty()) throw std::invalid_argument("conv2d_adjoint: empty image");
    const int w = resp.width(), h = resp.height(), r = f.radius(), k = f.size();
    const auto mapx = detail::boundary_map(w, r, rule);
    const auto mapy = detail::boundary_map(h, r, rule);
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = resp.px(x, y);
            if (v == 0.0) continue;
            for (int dy = 0; dy < k; ++dy) {
                const int sy = mapy[static_cast<std::size_t>(y + dy)];
                if (sy < 0) continue;
                double* row = out.data() + static_cast<std::size_t>(sy) * w;
                for (int dx = 0; dx < k; ++dx) {
                    const int sx = mapx[static_cast<std::size_t>(x + dx)];
                    if (sx < 0) continue;
                    row[sx] += f.tap(dy, dx) * v;
                }
            }
        }
    }
    return out;
}

// Gradient of <resp_grad, conv2d(input, f)> with respect to the filter taps:
// g(dy,dx) = sum_p resp_grad(p) * input(p shifted by (dx,dy), boundary-mapped).
inline Filter conv2d_tap_gradient(const Image& input, const Image& resp_grad, int size,
                                  BoundaryRule rule = BoundaryRule::SymmetricReflect) {
    if (!input.same_size(resp_grad))
        throw std::invalid_argument("conv2d_tap_gradient: size mismatch");
    const int w = input.width(), h = input.height(), r = size / 2;
    Filter g(size);
    const auto mapx = detail::boundary_map(w, r, rule);
    const auto mapy = detail::boundary_map(h, r, rule);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = resp_grad.px(x, y);
            if (v == 0.0) continue;
            for (int dy = 0; dy < size; ++dy) {
                const int sy = mapy[static_cast<std::size_t>(y + dy)];
                if (sy < 0) continue;
                const double* row = input.data() + static_cast<std::size_t>(sy) * w;
                for (int dx = 0; dx < size; ++dx) {
                    const int sx = mapx[static_cast<std::size_t>(x + dx)];
                    if (sx < 0) continue;
                    g.tap(dy, dx) += v * row[sx];
                }
            }
        }
    }
    return g;
}

// 10*log10(peak^2 / MSE); identical images return +infinity.
inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
    if (!a.same_size(b)) throw std::invalid_argument("psnr: size mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

inline Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
    Image out = img;
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * rng.normal();
    return out;
}

}  // namespace gradstop
