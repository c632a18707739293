#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "gradstop/foe.hpp"
#include "gradstop/parallel.hpp"
#include "gradstop/rng.hpp"

namespace gradstop {

// Generalized eigenpair of the regularizer gradient:
// sum_k K^T Phi(K v) = lambda v.
struct EigenPair {
    Image v;
    double lambda = 0.0;
    double residual = 0.0;  // l2 norm of sum_k K^T Phi(Kv) - lambda v
    bool converged = true;  // residual within the configured gate
};

// generalized Rayleigh quotient <sum K^T Phi(Kv), v> / ||v||^2
inline double rayleigh(const KernelBank& bank, const Image& v, const FilterResponses* cache = nullptr) {
    const double n2 = sq_norm(v);
    if (n2 == 0.0) throw std::invalid_argument("rayleigh: zero vector");
    return dot(reg_grad(bank, v, cache), v) / n2;
}

// ||sum K^T Phi(Kv) - Lambda(v) v||^2 with the residual-minimizing Lambda
inline double residual_loss(const KernelBank& bank, const Image& v) {
    const double n2 = sq_norm(v);
    if (n2 == 0.0) throw std::invalid_argument("residual_loss: zero vector");
    Image r = reg_grad(bank, v);
    const double lambda = dot(r, v) / n2;
    axpy(-lambda, v, r);
    return sq_norm(r);
}

// Gradient of residual_loss. The Lambda-variation term carries the factor
// <r, v>, which vanishes identically for the Rayleigh choice of Lambda, so
// grad = 2 (K^T DPhi(Kv) K r - Lambda r).
inline Image residual_loss_grad(const KernelBank& bank, const Image& v) {
    const double n2 = sq_norm(v);
    if (n2 == 0.0) throw std::invalid_argument("residual_loss_grad: zero vector");
    FilterResponses cache = filter_responses(bank, v);
    Image r = reg_grad(bank, v, &cache);
    const double lambda = dot(r, v) / n2;
    axpy(-lambda, v, r);
    Image g = reg_jvp(bank, v, r, &cache);
    axpy(-lambda, r, g);
    g *= 2.0;
    return g;
}

// (1 - lambda T / S): per-step intensity multiplier of an eigenfunction
// under the regularizer-only Euler step
inline double contrast_factor(double lambda, double T, int S) {
    if (S < 1) throw std::invalid_argument("contrast_factor: S must be >= 1");
    return 1.0 - lambda * T / S;
}

struct SpectralConfig {
    int count = 64;
    int size = 127;
    int iters = 10000;
    std::uint64_t seed = 0;
    double init_L = 1.0;
    int max_doublings = 60;
    double residual_gate = 1e-4;   // pairs above this are flagged, kept
    double stop_residual = 0.0;    // > 0 stops a pair early once reached
};

namespace detail {

// residual loss and its gradient in one pass over the kernels
inline double loss_and_grad(const KernelBank& bank, const Image& v, Image& grad) {
    const double n2 = sq_norm(v);
    FilterResponses cache = filter_responses(bank, v);
    Image r = reg_grad(bank, v, &cache);
    const double lambda = dot(r, v) / n2;
    axpy(-lambda, v, r);
    const double loss = sq_norm(r);
    grad = reg_jvp(bank, v, r, &cache);
    axpy(-lambda, r, grad);
    grad *= 2.0;
    return loss;
}

// Mean-free patch under a centered Gaussian window (std = size/4) so the
// minimization starts without boundary or constant components.
inline Image spectral_init(const Image& patch) {
    Image v = patch;
    double mean = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) mean += v[i];
    mean /= static_cast<double>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= mean;
    const double cx = (v.width() - 1) / 2.0, cy = (v.height() - 1) / 2.0;
    const double s2 = 2.0 * (v.width() / 4.0) * (v.width() / 4.0);
    for (int y = 0; y < v.height(); ++y)
        for (int x = 0; x < v.width(); ++x)
            v.px(x, y) *= std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / s2);
    mean = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) mean += v[i];
    mean /= static_cast<double>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= mean;
    return v;
}

// Nesterov-accelerated descent on the residual loss with the backtracked
// step-size rule (double on reject, relax once per accepted step) and
// function-value restart of the momentum sequence.
inline EigenPair minimize_pair(const KernelBank& bank, Image v, const SpectralConfig& cfg) {
    Image vprev = v;
    double L = cfg.init_L;
    double t_momentum = 1.0;
    double prev_loss = residual_loss(bank, v);
    for (int it = 0; it < cfg.iters; ++it) {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
        const double beta = (t_momentum - 1.0) / t_next;

        Image vt = v;
        vt *= (1.0 + beta);
        axpy(-beta, vprev, vt);

        Image grad;
        const double loss_t = loss_and_grad(bank, vt, grad);
        const double g2 = sq_norm(grad);
        if (g2 == 0.0) break;

        Image cand;
        double loss_c = 0.0;
        bool accepted = false;
        for (int tries = 0; tries <= cfg.max_doublings; ++tries) {
            cand = vt;
            axpy(-1.0 / L, grad, cand);
            loss_c = residual_loss(bank, cand);
            if (loss_c <= loss_t - 0.5 * g2 / L) {
                L *= 0.5;
                accepted = true;
                break;
            }
            L *= 2.0;
        }
        if (!accepted) break;
        vprev = std::move(v);
        v = std::move(cand);
        t_momentum = (loss_c > prev_loss) ? 1.0 : t_next;  // restart on non-monotonicity
        prev_loss = loss_c;
        if (cfg.stop_residual > 0.0 && std::sqrt(loss_c) <= cfg.stop_residual) break;
    }

    EigenPair pair;
    FilterResponses cache = filter_responses(bank, v);
    Image r = reg_grad(bank, v, &cache);
    pair.lambda = dot(r, v) / sq_norm(v);
    axpy(-pair.lambda, v, r);
    pair.residual = l2_norm(r);
    pair.converged = pair.residual <= cfg.residual_gate;
    pair.v = std::move(v);
    return pair;
}

}  // namespace detail

// N_v independent minimizations of the residual loss by over-relaxed
// gradient descent with backtracked steps, initialized from mean-subtracted
// Gaussian-windowed patches. Pairs return sorted by ascending eigenvalue.
inline std::vector<EigenPair> solve_eigenpairs(const KernelBank& bank, const SpectralConfig& cfg,
                                               std::span<const Image> patch_source) {
    if (patch_source.empty()) throw std::invalid_argument("solve_eigenpairs: empty patch source");
    std::vector<Image> inits;
    inits.reserve(static_cast<std::size_t>(cfg.count));
    Rng rng(cfg.seed);
    for (int j = 0; j < cfg.count; ++j) {
        const Image& src = patch_source[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(patch_source.size()) - 1))];
        if (src.width() < cfg.size || src.height() < cfg.size)
            throw std::invalid_argument("solve_eigenpairs: patch source smaller than requested size");
        const int x0 = rng.uniform_int(0, src.width() - cfg.size);
        const int y0 = rng.uniform_int(0, src.height() - cfg.size);
        Image patch(cfg.size, cfg.size);
        for (int y = 0; y < cfg.size; ++y)
            for (int x = 0; x < cfg.size; ++x) patch.px(x, y) = src.px(x0 + x, y0 + y);
        inits.push_back(detail::spectral_init(patch));
    }

    std::vector<EigenPair> pairs(inits.size());
    parallel_for(inits.size(), [&](std::size_t j) {
        pairs[j] = detail::minimize_pair(bank, std::move(inits[j]), cfg);
    });
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const EigenPair& a, const EigenPair& b) { return a.lambda < b.lambda; });
    return pairs;
}

}  // namespace gradstop
