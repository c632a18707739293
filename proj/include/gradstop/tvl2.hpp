#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "gradstop/image.hpp"
#include "gradstop/parallel.hpp"

namespace gradstop {

// Smoothed TV-L2: E[u] = ||u - g||^2 + nu * sum_ij sqrt(|(Du)_ij|^2 + eps^2)
// with the forward-difference gradient D under the Neumann boundary
// constraint (differences across the border are zero). Note the data term
// carries no 1/2.
struct TvConfig {
    double nu = 0.05;
    double eps = 1e-6;
    double step = 1e-4;
    int max_iters = 1000;
};

namespace detail {

// forward differences, zero at the last row/column
inline void tv_forward_diff(const Image& u, Image& dx, Image& dy) {
    const int w = u.width(), h = u.height();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            dx.px(x, y) = (x + 1 < w) ? u.px(x + 1, y) - u.px(x, y) : 0.0;
            dy.px(x, y) = (y + 1 < h) ? u.px(x, y + 1) - u.px(x, y) : 0.0;
        }
}

}  // namespace detail

inline double tv_energy(const Image& u, const Image& g, const TvConfig& cfg) {
    if (!u.same_size(g)) throw std::invalid_argument("tv_energy: size mismatch");
    if (cfg.eps <= 0.0 || cfg.step <= 0.0) throw std::invalid_argument("tv_energy: eps and step must be > 0");
    Image dx(u.width(), u.height()), dy(u.width(), u.height());
    detail::tv_forward_diff(u, dx, dy);
    double e = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - g[i];
        e += d * d + cfg.nu * std::sqrt(dx[i] * dx[i] + dy[i] * dy[i] + cfg.eps * cfg.eps);
    }
    return e;
}

// exact gradient: 2(u - g) + nu * D^T (Du / sqrt(|Du|^2 + eps^2)),
// D^T the scatter adjoint of the Neumann forward differences
inline Image tv_grad(const Image& u, const Image& g, const TvConfig& cfg) {
    if (!u.same_size(g)) throw std::invalid_argument("tv_grad: size mismatch");
    const int w = u.width(), h = u.height();
    Image dx(w, h), dy(w, h);
    detail::tv_forward_diff(u, dx, dy);
    Image grad(w, h);
    for (std::size_t i = 0; i < u.size(); ++i) grad[i] = 2.0 * (u[i] - g[i]);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double mag = std::sqrt(dx.px(x, y) * dx.px(x, y) + dy.px(x, y) * dy.px(x, y) +
                                         cfg.eps * cfg.eps);
            const double nx = cfg.nu * dx.px(x, y) / mag;
            const double ny = cfg.nu * dy.px(x, y) / mag;
            if (x + 1 < w) {
                grad.px(x + 1, y) += nx;
                grad.px(x, y) -= nx;
            }
            if (y + 1 < h) {
                grad.px(x, y + 1) += ny;
                grad.px(x, y) -= ny;
            }
        }
    return grad;
}

struct TvSweepRow {
    int iters = 0;
    double nu = 0.0;
    double psnr = 0.0;
};

// One plain gradient-descent run per nu, recording PSNR against the ground
// truth at the requested iteration counts. The nu columns run in parallel.
inline std::vector<TvSweepRow> tv_sweep(const Image& g_noisy, const Image& xg,
                                        std::span<const double> nu_grid,
                                        std::span<const int> iter_grid, const TvConfig& base) {
    if (nu_grid.empty() || iter_grid.empty()) throw std::invalid_argument("tv_sweep: empty grid");
    std::vector<int> iters(iter_grid.begin(), iter_grid.end());
    std::vector<TvSweepRow> rows(nu_grid.size() * iters.size());
    parallel_for(nu_grid.size(), [&](std::size_t col) {
        TvConfig cfg = base;
        cfg.nu = nu_grid[col];
        Image u = g_noisy;
        std::size_t next = 0;
        const int last = iters.back();
        for (int k = 1; k <= last && next < iters.size(); ++k) {
            axpy(-cfg.step, tv_grad(u, g_noisy, cfg), u);
            while (next < iters.size() && iters[next] == k) {
                rows[col * iters.size() + next] = TvSweepRow{k, cfg.nu, psnr(u, xg)};
                ++next;
            }
        }
    });
    return rows;
}

}  // namespace gradstop
