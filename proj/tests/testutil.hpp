#pragma once

// Shared helpers and independent oracles for the test suites. Everything in
// here is deliberately implementation-agnostic: dense operators are built by
// probing with unit impulses, eigenvalues come from a plain Jacobi sweep, and
// derivatives from finite differences.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "gradstop/foe.hpp"
#include "gradstop/image.hpp"
#include "gradstop/rng.hpp"

namespace testutil {

using gradstop::Filter;
using gradstop::Image;
using gradstop::Rng;

inline Image random_image(int w, int h, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Image img(w, h);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(lo, hi);
    return img;
}

inline Filter random_filter(int size, Rng& rng, bool zero_mean = false, double scale = 1.0) {
    Filter f(size);
    for (std::size_t i = 0; i < f.tap_count(); ++i) f[i] = rng.normal();
    if (zero_mean) {
        const double mean = f.tap_sum() / static_cast<double>(f.tap_count());
        for (std::size_t i = 0; i < f.tap_count(); ++i) f[i] -= mean;
    }
    const double n = f.frob_norm();
    if (n > 0.0)
        for (std::size_t i = 0; i < f.tap_count(); ++i) f[i] *= scale / n;
    return f;
}

// Feasible random bank: zero-mean kernels with ||kappa||_F = kscale and
// spline activations with ||w||_2 = wscale.
inline gradstop::KernelBank random_bank(int n_kernels, int kernel_size, int n_weights, Rng& rng,
                                        double kscale = 0.9, double wscale = 0.5) {
    gradstop::KernelBank bank;
    for (int k = 0; k < n_kernels; ++k) {
        bank.filters.push_back(random_filter(kernel_size, rng, /*zero_mean=*/true, kscale));
        std::vector<double> w(static_cast<std::size_t>(n_weights));
        double n2 = 0.0;
        for (double& v : w) {
            v = rng.normal();
            n2 += v * v;
        }
        for (double& v : w) v *= wscale / std::sqrt(n2);
        bank.activations.push_back(std::make_shared<gradstop::ActivationSpline>(std::move(w)));
    }
    return bank;
}

// Dense matrix of a linear operator on R^n, assembled column by column from
// unit impulses.
inline std::vector<std::vector<double>> assemble_dense(
    int w, int h, const std::function<Image(const Image&)>& op) {
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        Image e(w, h);
        e[j] = 1.0;
        const Image col = op(e);
        for (std::size_t i = 0; i < n; ++i) m[i][j] = col[i];
    }
    return m;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
inline std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

// central difference derivative of a scalar function
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// 5-point central stencil, O(h^4)
inline double central_diff5(const std::function<double(double)>& f, double x, double h) {
    return (-f(x + 2 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2 * h)) / (12.0 * h);
}

inline double second_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

inline double rel_error(double got, double want) {
    const double denom = std::max(std::abs(want), 1e-30);
    return std::abs(got - want) / denom;
}

inline double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testutil
