#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "gradstop/activation.hpp"
#include "gradstop/image.hpp"

namespace gradstop {

// Field-of-Experts regularizer: N_K zero-mean filters kappa_k with one
// activation phi_k each. R[x] = sum_k sum_i rho_k((K_k x)_i).
// All filtering uses the symmetric-reflect boundary, so zero-mean kernels
// annihilate constants exactly (gray-shift invariance).
struct KernelBank {
    std::vector<Filter> filters;
    std::vector<std::shared_ptr<const Activation>> activations;

    int count() const { return static_cast<int>(filters.size()); }

    const Activation& activation(int k) const { return *activations[static_cast<std::size_t>(k)]; }
    const Filter& filter(int k) const { return filters[static_cast<std::size_t>(k)]; }
};

struct BankCheck {
    bool zero_mean_ok = true;   // |sum of taps| <= tol per kernel
    bool alpha_ok = true;       // ||kappa||_F^2 <= 1 per kernel
    bool beta_ok = true;        // ||w||_2^2 <= 1 per spline activation
    double max_abs_mean = 0.0;
    double max_alpha = 0.0;
    double max_beta = 0.0;
    bool ok() const { return zero_mean_ok && alpha_ok && beta_ok; }
};

inline BankCheck validate(const KernelBank& bank, double mean_tol = 1e-12, double norm_slack = 1e-12) {
    BankCheck c;
    for (int k = 0; k < bank.count(); ++k) {
        const double mean = bank.filter(k).tap_sum() / static_cast<double>(bank.filter(k).tap_count());
        const double alpha = bank.filter(k).frob_norm() * bank.filter(k).frob_norm();
        c.max_abs_mean = std::max(c.max_abs_mean, std::abs(mean));
        c.max_alpha = std::max(c.max_alpha, alpha);
        if (std::abs(mean) > mean_tol) c.zero_mean_ok = false;
        if (alpha > 1.0 + norm_slack) c.alpha_ok = false;
        if (auto beta = bank.activation(k).weight_norm_sq()) {
            c.max_beta = std::max(c.max_beta, *beta);
            if (*beta > 1.0 + norm_slack) c.beta_ok = false;
        }
    }
    return c;
}

// Per-kernel forward responses K_k x, reusable across the grad/jvp/bilinear
// operators evaluated at the same state.
struct FilterResponses {
    std::vector<Image> kx;
};

inline FilterResponses filter_responses(const KernelBank& bank, const Image& x) {
    FilterResponses r;
    r.kx.reserve(static_cast<std::size_t>(bank.count()));
    for (int k = 0; k < bank.count(); ++k) r.kx.push_back(conv2d(x, bank.filter(k)));
    return r;
}

// sum_k sum_i rho_k((K_k x)_i)
inline double reg_energy(const KernelBank& bank, const Image& x) {
    double e = 0.0;
    for (int k = 0; k < bank.count(); ++k) {
        const Image kx = conv2d(x, bank.filter(k));
        const Activation& act = bank.activation(k);
        for (std::size_t i = 0; i < kx.size(); ++i) e += act.potential(kx[i]);
    }
    return e;
}

namespace detail {

// One pass over the kernels computing any subset of
//   grad = sum_k K^T phi(Kx)
//   jvp  = sum_k K^T [dphi(Kx) . (Kp)]
//   bil  = sum_k K^T [d2phi(Kx) . (Kv) . (Kv)]
// The forward response Kx is computed once (or taken from cache).
inline void reg_fused(const KernelBank& bank, const Image& x, const Image* p, const Image* v,
                      Image* grad, Image* jvp, Image* bil, const FilterResponses* cache) {
    if (grad) *grad = Image(x.width(), x.height());
    if (jvp) *jvp = Image(x.width(), x.height());
    if (bil) *bil = Image(x.width(), x.height());
    Image work(x.width(), x.height());
    for (int k = 0; k < bank.count(); ++k) {
        const Filter& f = bank.filter(k);
        const Activation& act = bank.activation(k);
        const Image kx_local = cache ? Image() : conv2d(x, f);
        const Image& kx = cache ? cache->kx[static_cast<std::size_t>(k)] : kx_local;
        if (grad) {
            act.phi_n(kx.data(), work.data(), kx.size());
            *grad += conv2d_adjoint(work, f);
        }
        if (jvp) {
            const Image kp = conv2d(*p, f);
            for (std::size_t i = 0; i < kx.size(); ++i) work[i] = act.dphi(kx[i]) * kp[i];
            *jvp += conv2d_adjoint(work, f);
        }
        if (bil) {
            const Image kv = conv2d(*v, f);
            for (std::size_t i = 0; i < kx.size(); ++i) work[i] = act.d2phi(kx[i]) * kv[i] * kv[i];
            *bil += conv2d_adjoint(work, f);
        }
    }
}

}  // namespace detail

// gradient of reg_energy: sum_k K^T phi_k(K_k x)
inline Image reg_grad(const KernelBank& bank, const Image& x, const FilterResponses* cache = nullptr) {
    Image g;
    detail::reg_fused(bank, x, nullptr, nullptr, &g, nullptr, nullptr, cache);
    return g;
}

// directional derivative of reg_grad: sum_k K^T [dphi_k(K_k x) . (K_k p)];
// symmetric in p for every x (K^T D K with diagonal D)
inline Image reg_jvp(const KernelBank& bank, const Image& x, const Image& p,
                     const FilterResponses* cache = nullptr) {
    if (!x.same_size(p)) throw std::invalid_argument("reg_jvp: size mismatch");
    Image g;
    detail::reg_fused(bank, x, &p, nullptr, nullptr, &g, nullptr, cache);
    return g;
}

// second-derivative form: sum_k K^T [d2phi_k(K_k x) . (K_k v) . (K_k v)]
inline Image reg_bilinear(const KernelBank& bank, const Image& x, const Image& v,
                          const FilterResponses* cache = nullptr) {
    if (!x.same_size(v)) throw std::invalid_argument("reg_bilinear: size mismatch");
    Image g;
    detail::reg_fused(bank, x, nullptr, &v, nullptr, nullptr, &g, cache);
    return g;
}

}  // namespace gradstop
