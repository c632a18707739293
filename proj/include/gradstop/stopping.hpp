#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gradstop/flow.hpp"
#include "gradstop/parallel.hpp"
#include "gradstop/quadrature.hpp"

namespace gradstop {

// J = (1/2) ||x_S - x_g||^2
inline double energy_J(const Trajectory& traj, const Image& xg) {
    if (!traj.terminal().same_size(xg)) throw std::invalid_argument("energy_J: size mismatch");
    Image d = traj.terminal();
    d -= xg;
    return 0.5 * sq_norm(d);
}

// First-order stopping condition -(1/T) int <p, xdot> dt with the discrete
// rule int <p, xdot> ~ (1/(S+1)) sum_s <p_s, T f(x_s)>; the T cancels.
// Zero at a stationary stopping time; approximates dJ/dT.
inline double first_order_value(const Trajectory& traj, const ControlSet& c) {
    if (!traj.has_adjoints()) throw std::invalid_argument("first_order_value: adjoints missing");
    if (traj.T <= 0.0) throw std::invalid_argument("first_order_value: requires T > 0");
    double acc = 0.0;
    for (std::size_t s = 0; s < traj.states.size(); ++s)
        acc += dot(traj.adjoints[s], f_rhs(traj.states[s], c));
    return -acc / static_cast<double>(traj.states.size());
}

// Depth choice for a T sweep: either a fixed S for every T, or the paper's
// fixed ratio S/T = const, never below min_depth.
struct DepthRule {
    bool use_fixed = true;
    int fixed_depth = 100;
    double steps_per_unit_T = 0.0;
    int min_depth = 2;

    static DepthRule fixed(int S) {
        DepthRule r;
        r.use_fixed = true;
        r.fixed_depth = S;
        return r;
    }
    static DepthRule ratio(double steps_per_unit_T, int min_depth = 2) {
        DepthRule r;
        r.use_fixed = false;
        r.steps_per_unit_T = steps_per_unit_T;
        r.min_depth = min_depth;
        return r;
    }
    int depth_for(double T) const {
        if (use_fixed) return std::max(fixed_depth, 1);
        const int s = static_cast<int>(std::lround(steps_per_unit_T * T));
        return std::max(s, min_depth);
    }
};

struct StoppingCurve {
    std::vector<double> T_values;
    std::vector<double> energies;
    std::vector<double> foc;
};

// Energy and first-order-condition curves over a T grid. Grid points are
// independent and evaluated in parallel; divergence propagates.
inline StoppingCurve sweep_T(const ControlSet& base, std::span<const double> T_grid,
                             const DepthRule& rule, const Image& xg, Scheme scheme = Scheme::Euler) {
    if (T_grid.empty()) throw std::invalid_argument("sweep_T: empty grid");
    StoppingCurve curve;
    curve.T_values.assign(T_grid.begin(), T_grid.end());
    curve.energies.assign(T_grid.size(), 0.0);
    curve.foc.assign(T_grid.size(), 0.0);
    parallel_for(T_grid.size(), [&](std::size_t i) {
        ControlSet c = base;
        c.T = T_grid[i];
        const int S = rule.depth_for(c.T);
        Trajectory traj = (scheme == Scheme::Euler) ? forward_euler(c, S) : forward_heun(c, S);
        if (scheme == Scheme::Euler) adjoint_euler(traj, c, xg);
        else adjoint_heun(traj, c, xg);
        curve.energies[i] = energy_J(traj, xg);
        curve.foc[i] = first_order_value(traj, c);
    });
    return curve;
}

inline std::size_t argmin_energy(const StoppingCurve& curve) {
    return static_cast<std::size_t>(
        std::min_element(curve.energies.begin(), curve.energies.end()) - curve.energies.begin());
}

// First sign change of the foc, located by linear interpolation between the
// bracketing grid points; an exact zero wins (ties toward smaller T).
inline std::optional<double> foc_zero_crossing(const StoppingCurve& curve) {
    for (std::size_t i = 0; i + 1 < curve.foc.size(); ++i) {
        const double a = curve.foc[i], b = curve.foc[i + 1];
        if (a == 0.0) return curve.T_values[i];
        if (a * b < 0.0) {
            const double t = a / (a - b);
            return curve.T_values[i] + t * (curve.T_values[i + 1] - curve.T_values[i]);
        }
    }
    if (!curve.foc.empty() && curve.foc.back() == 0.0) return curve.T_values.back();
    return std::nullopt;
}

// Index of the grid cell [T_i, T_{i+1}] containing the first foc sign change.
inline std::optional<std::size_t> foc_crossing_cell(const StoppingCurve& curve) {
    for (std::size_t i = 0; i + 1 < curve.foc.size(); ++i) {
        if (curve.foc[i] == 0.0) return i;
        if (curve.foc[i] * curve.foc[i + 1] < 0.0) return i;
    }
    return std::nullopt;
}

struct SecondOrderResult {
    double value = 0.0;           // quadratic_form / (1 + ||x||_H1^2): > 0 certifies a strict local minimum
    double quadratic_form = 0.0;  // raw value of the second-order functional
    double h1_norm_sq = 0.0;      // squared H1 norm of the linearized state
    double terminal_sq = 0.0;     // <x(1), x(1)> term of the functional
};

// Second-order sufficient condition at T = c.T. Integrates the linearized
// forced sensitivity ODE  wdot = -T (K^T DPhi(Kx) K w + weight A^T A w) + f(x),
// w(0) = 0, with forward Euler on the trajectory grid, then evaluates
//   Q = int <p, T K^T D2Phi(Kx)(Kw,Kw) + 2 K^T DPhi(Kx) Kw + 2 weight A^T A w> dt
//       + <w(1), w(1)>
// by the quadrature, interpolating trajectory values linearly to the nodes.
// The A^T A term enters once (not per kernel). Positive value indicates a
// strict local minimum of T -> J(T).
inline SecondOrderResult second_order_form(const ControlSet& c, int depth, const Image& xg,
                                           const Quadrature& quad) {
    Trajectory traj = forward_euler(c, depth);
    adjoint_euler(traj, c, xg);

    const int S = depth;
    std::vector<Image> w(static_cast<std::size_t>(S) + 1);
    std::vector<Image> wdot(static_cast<std::size_t>(S) + 1);
    w[0] = Image(c.x0.width(), c.x0.height());
    for (int s = 0; s <= S; ++s) {
        const Image& xs = traj.states[static_cast<std::size_t>(s)];
        Image rhs = adjoint_rhs(xs, w[static_cast<std::size_t>(s)], c);
        rhs *= -c.T;
        rhs += f_rhs(xs, c);
        if (!all_finite(rhs)) throw DivergedError(s);
        wdot[static_cast<std::size_t>(s)] = rhs;
        if (s < S) {
            Image next = w[static_cast<std::size_t>(s)];
            axpy(1.0 / S, rhs, next);
            w[static_cast<std::size_t>(s) + 1] = std::move(next);
        }
    }

    auto lerp = [S](const std::vector<Image>& arr, double t) {
        double u = t * S;
        int i = static_cast<int>(u);
        if (i >= S) i = S - 1;
        const double th = u - i;
        Image out = arr[static_cast<std::size_t>(i)];
        out *= (1.0 - th);
        axpy(th, arr[static_cast<std::size_t>(i) + 1], out);
        return out;
    };

    SecondOrderResult res;
    for (std::size_t qi = 0; qi < quad.nodes.size(); ++qi) {
        const double t = quad.nodes[qi];
        const double wq = quad.weights[qi];
        const Image xt = lerp(traj.states, t);
        const Image pt = lerp(traj.adjoints, t);
        const Image wt = lerp(w, t);
        const Image wdt = lerp(wdot, t);

        Image integrand(xt.width(), xt.height());
        if (c.bank.count() > 0) {
            FilterResponses cache = filter_responses(c.bank, xt);
            integrand = reg_bilinear(c.bank, xt, wt, &cache);
            integrand *= c.T;
            axpy(2.0, reg_jvp(c.bank, xt, wt, &cache), integrand);
        }
        axpy(2.0, normal_apply(c.opA, wt), integrand);
        res.quadratic_form += wq * dot(pt, integrand);
        res.h1_norm_sq += wq * (sq_norm(wt) + sq_norm(wdt));
    }
    res.terminal_sq = sq_norm(w[static_cast<std::size_t>(S)]);
    res.quadratic_form += res.terminal_sq;
    res.value = res.quadratic_form / (1.0 + res.h1_norm_sq);
    return res;
}

}  // namespace gradstop
