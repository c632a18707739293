#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "gradstop/dataops.hpp"
#include "gradstop/foe.hpp"
#include "gradstop/image.hpp"
#include "gradstop/rng.hpp"

namespace gradstop {

// Everything defining one flow: stopping time, regularizer, data operator,
// observation b and initial state x0. The flow runs on the rescaled time
// grid t_s = s/S with velocity T*f(x).
struct ControlSet {
    double T = 0.0;
    KernelBank bank;
    DataOperator opA;
    Image b;
    Image x0;
};

enum class Scheme { Euler, Heun };

struct Trajectory {
    Scheme scheme = Scheme::Euler;
    int depth = 0;  // S; states has S+1 entries at t_s = s/S
    double T = 0.0;
    std::vector<Image> states;
    std::vector<Image> adjoints;  // empty until an adjoint pass fills them

    bool has_adjoints() const { return !adjoints.empty(); }
    const Image& terminal() const { return states.back(); }
};

class DivergedError : public std::runtime_error {
public:
    explicit DivergedError(int step)
        : std::runtime_error("flow diverged: non-finite state at step " + std::to_string(step)),
          step(step) {}
    int step;
};

// f(x) = -weight*A^T(Ax - b) - sum_k K_k^T phi_k(K_k x).
// T is not included; it multiplies f in the transformed state equation.
inline Image f_rhs(const Image& x, const ControlSet& c) {
    Image g = data_grad(c.opA, x, c.b);
    if (c.bank.count() > 0) g += reg_grad(c.bank, x);
    g *= -1.0;
    return g;
}

// adjoint right-hand side g(x,p) = sum_k K^T dphi(Kx) K p + weight*A^T A p
inline Image adjoint_rhs(const Image& x, const Image& p, const ControlSet& c) {
    Image g = normal_apply(c.opA, p);
    if (c.bank.count() > 0) g += reg_jvp(c.bank, x, p);
    return g;
}

// x_{s+1} = x_s + (T/S) f(x_s)
inline Trajectory forward_euler(const ControlSet& c, int depth) {
    if (depth < 1) throw std::invalid_argument("forward_euler: depth must be >= 1");
    Trajectory traj;
    traj.scheme = Scheme::Euler;
    traj.depth = depth;
    traj.T = c.T;
    traj.states.reserve(static_cast<std::size_t>(depth) + 1);
    traj.states.push_back(c.x0);
    const double h = c.T / depth;
    for (int s = 0; s < depth; ++s) {
        Image next = traj.states.back();
        axpy(h, f_rhs(traj.states.back(), c), next);
        if (!all_finite(next)) throw DivergedError(s + 1);
        traj.states.push_back(std::move(next));
    }
    return traj;
}

// x_{s+1} = x_s + (T/2S) (f(x_s) + f(x_s + (T/S) f(x_s)))
inline Trajectory forward_heun(const ControlSet& c, int depth) {
    if (depth < 1) throw std::invalid_argument("forward_heun: depth must be >= 1");
    Trajectory traj;
    traj.scheme = Scheme::Heun;
    traj.depth = depth;
    traj.T = c.T;
    traj.states.reserve(static_cast<std::size_t>(depth) + 1);
    traj.states.push_back(c.x0);
    const double h = c.T / depth;
    for (int s = 0; s < depth; ++s) {
        const Image& x = traj.states.back();
        const Image fx = f_rhs(x, c);
        Image mid = x;
        axpy(h, fx, mid);
        const Image fmid = f_rhs(mid, c);
        Image next = x;
        axpy(0.5 * h, fx, next);
        axpy(0.5 * h, fmid, next);
        if (!all_finite(next)) throw DivergedError(s + 1);
        traj.states.push_back(std::move(next));
    }
    return traj;
}

// terminal condition p(1) = x_g - x(1)
inline Image adjoint_seed(const Image& xS, const Image& xg) {
    if (!xS.same_size(xg)) throw std::invalid_argument("adjoint_seed: size mismatch");
    return xg - xS;
}

// p_s = p_{s+1} - (T/S) g(x_{s+1}, p_{s+1})
inline void adjoint_euler(Trajectory& traj, const ControlSet& c, const Image& xg) {
    if (traj.scheme != Scheme::Euler)
        throw std::invalid_argument("adjoint_euler: trajectory was not produced by the Euler scheme");
    const int S = traj.depth;
    traj.adjoints.assign(static_cast<std::size_t>(S) + 1, Image());
    traj.adjoints[static_cast<std::size_t>(S)] = adjoint_seed(traj.states.back(), xg);
    const double h = traj.T / S;
    for (int s = S - 1; s >= 0; --s) {
        const Image& pn = traj.adjoints[static_cast<std::size_t>(s) + 1];
        Image p = pn;
        axpy(-h, adjoint_rhs(traj.states[static_cast<std::size_t>(s) + 1], pn, c), p);
        traj.adjoints[static_cast<std::size_t>(s)] = std::move(p);
    }
}

// p_s = p_{s+1} - (T/2S) (g(x_{s+1}, p_{s+1}) + g(x_s, p_{s+1} - (T/S) g(x_{s+1}, p_{s+1})))
inline void adjoint_heun(Trajectory& traj, const ControlSet& c, const Image& xg) {
    if (traj.scheme != Scheme::Heun)
        throw std::invalid_argument("adjoint_heun: trajectory was not produced by the Heun scheme");
    const int S = traj.depth;
    traj.adjoints.assign(static_cast<std::size_t>(S) + 1, Image());
    traj.adjoints[static_cast<std::size_t>(S)] = adjoint_seed(traj.states.back(), xg);
    const double h = traj.T / S;
    for (int s = S - 1; s >= 0; --s) {
        const Image& pn = traj.adjoints[static_cast<std::size_t>(s) + 1];
        const Image g1 = adjoint_rhs(traj.states[static_cast<std::size_t>(s) + 1], pn, c);
        Image mid = pn;
        axpy(-h, g1, mid);
        const Image g2 = adjoint_rhs(traj.states[static_cast<std::size_t>(s)], mid, c);
        Image p = pn;
        axpy(-0.5 * h, g1, p);
        axpy(-0.5 * h, g2, p);
        traj.adjoints[static_cast<std::size_t>(s)] = std::move(p);
    }
}

namespace detail {

// Signed extreme eigenvalue of the symmetric flow Jacobian
// Df(x) = -(reg Hessian + weight*A^T A), by power iteration.
inline double jacobian_extreme_eigenvalue(const Image& x, const ControlSet& c, int iters = 50) {
    Rng rng(12345);
    Image v(x.width(), x.height());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal();
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        Image av = adjoint_rhs(x, v, c);  // symmetric: reg_jvp + weight*A^T A
        av *= -1.0;
        const double nrm = l2_norm(av);
        if (nrm == 0.0) return 0.0;
        lambda = dot(v, av) / sq_norm(v);
        av *= 1.0 / nrm;
        v = std::move(av);
    }
    return lambda;
}

}  // namespace detail

// Explicit-Euler stability margin max_s |1 + (T/S) lambda(x_s)| where lambda
// is the extreme eigenvalue of the flow Jacobian, estimated by 50 power
// iterations from a fixed-seed start. Values <= 1 mean stable. States are
// subsampled (endpoints always included) when S is large.
inline double stability_margin(const Trajectory& traj, const ControlSet& c) {
    const double h = traj.T / traj.depth;
    const int max_samples = 33;
    const int n = static_cast<int>(traj.states.size());
    const int stride = (n > max_samples) ? (n - 1 + max_samples - 2) / (max_samples - 1) : 1;
    double margin = 0.0;
    bool saw_last = false;
    for (int idx = 0; idx < n; idx += stride) {
        const double lambda = detail::jacobian_extreme_eigenvalue(traj.states[static_cast<std::size_t>(idx)], c);
        margin = std::max(margin, std::abs(1.0 + h * lambda));
        saw_last = (idx == n - 1);
    }
    if (!saw_last) {
        const double lambda = detail::jacobian_extreme_eigenvalue(traj.states.back(), c);
        margin = std::max(margin, std::abs(1.0 + h * lambda));
    }
    return margin;
}

}  // namespace gradstop
