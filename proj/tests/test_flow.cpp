#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gradstop/flow.hpp"
#include "gradstop/toy2d.hpp"
#include "testutil.hpp"

using namespace gradstop;
using testutil::random_bank;
using testutil::random_image;

namespace {

// scalar decay problem xdot = -x: N_K = 0, identity A, b = 0
ControlSet decay_problem(double T, double x0 = 1.0) {
    ControlSet c;
    c.T = T;
    c.opA = DataOperator::identity();
    c.b = Image(1, 1, 0.0);
    c.x0 = Image(1, 1, x0);
    return c;
}

}  // namespace

TEST_CASE("f_rhs on the R^2 scenario", "[flow]") {
    const ControlSet c = toy_control(1.0);
    const Image f = f_rhs(c.x0, c);
    REQUIRE(f[0] == Catch::Approx(0.70711).margin(1e-5));
    REQUIRE(f[1] == Catch::Approx(-2.20711).margin(1e-5));

    const Image x_inf = toy_stationary_point(c);
    REQUIRE(l2_norm(f_rhs(x_inf, c)) < 1e-12);
}

TEST_CASE("f_rhs reduces to -x without a regularizer", "[flow]") {
    const ControlSet c = decay_problem(1.0);
    Rng rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        ControlSet cc = c;
        cc.x0 = Image(1, 1, rng.uniform(-2.0, 2.0));
        const Image f = f_rhs(cc.x0, cc);
        REQUIRE(f[0] == -cc.x0[0]);
    }
}

TEST_CASE("forward Euler basics and first-order convergence", "[flow]") {
    const Trajectory one = forward_euler(decay_problem(1.0), 1);
    REQUIRE(one.states.back()[0] == 0.0);  // 1 + 1*(-1)

    const Trajectory frozen = forward_euler(decay_problem(0.0), 7);
    for (const Image& x : frozen.states) REQUIRE(x[0] == 1.0);

    const double exact = std::exp(-1.0);
    double prev_err = 0.0;
    for (int S : {10, 100, 1000}) {
        const double err = std::abs(forward_euler(decay_problem(1.0), S).states.back()[0] - exact);
        if (S > 10) {
            const double ratio = prev_err / err;
            REQUIRE(ratio > 8.0);
            REQUIRE(ratio < 12.5);
        }
        prev_err = err;
    }
}

TEST_CASE("Heun converges at second order and agrees with Euler", "[flow]") {
    const double exact = std::exp(-1.0);
    double prev_err = 0.0;
    for (int S : {10, 100, 1000}) {
        const double err = std::abs(forward_heun(decay_problem(1.0), S).states.back()[0] - exact);
        if (S > 10) {
            const double ratio = prev_err / err;
            REQUIRE(ratio > 70.0);
            REQUIRE(ratio < 130.0);
        }
        prev_err = err;
    }

    const Trajectory frozen = forward_heun(decay_problem(0.0), 5);
    for (const Image& x : frozen.states) REQUIRE(x[0] == 1.0);

    // both schemes approach the same continuum trajectory on the toy problem
    const ControlSet toy = toy_control(1.5);
    const Trajectory euler = forward_euler(toy, 1000);
    const Trajectory heun = forward_heun(toy, 1000);
    Image d = euler.states.back();
    d -= heun.states.back();
    REQUIRE(l2_norm(d) < 1e-2);
    REQUIRE(l2_norm(d) > 0.0);
}

TEST_CASE("integration fails loudly on divergence", "[flow]") {
    ControlSet c = decay_problem(2e200);
    try {
        forward_euler(c, 2);
        FAIL("expected DivergedError");
    } catch (const DivergedError& e) {
        REQUIRE(e.step == 2);
    }
}

TEST_CASE("adjoint seed", "[flow]") {
    Rng rng(2);
    const Image a = random_image(6, 5, rng), b = random_image(6, 5, rng);
    REQUIRE(sq_norm(adjoint_seed(a, a)) == 0.0);
    Image want = b;
    want -= a;
    REQUIRE(testutil::max_abs_diff(adjoint_seed(a, b), want) == 0.0);
    REQUIRE_THROWS_AS(adjoint_seed(a, Image(2, 2, 0.0)), std::invalid_argument);
}

TEST_CASE("adjoint recursions match the linear closed form", "[flow]") {
    const double T = 0.8;
    const int S = 16;
    const ControlSet c = decay_problem(T);
    const double h = T / S;

    Trajectory te = forward_euler(c, S);
    adjoint_euler(te, c, te.states.back());  // xg = x_S -> p = 0
    for (const Image& p : te.adjoints) REQUIRE(p[0] == 0.0);

    const Image xg(1, 1, 0.25);
    adjoint_euler(te, c, xg);
    const double pS = xg[0] - te.states.back()[0];
    for (int s = 0; s <= S; ++s) {
        const double want = std::pow(1.0 - h, S - s) * pS;
        REQUIRE(te.adjoints[static_cast<std::size_t>(s)][0] == Catch::Approx(want).margin(1e-14));
    }

    Trajectory th = forward_heun(c, S);
    adjoint_heun(th, c, xg);
    const double pSh = xg[0] - th.states.back()[0];
    const double factor = 1.0 - h + 0.5 * h * h;
    for (int s = 0; s <= S; ++s) {
        const double want = std::pow(factor, S - s) * pSh;
        REQUIRE(th.adjoints[static_cast<std::size_t>(s)][0] == Catch::Approx(want).margin(1e-14));
    }

    REQUIRE_THROWS_AS(adjoint_heun(te, c, xg), std::invalid_argument);
    REQUIRE_THROWS_AS(adjoint_euler(th, c, xg), std::invalid_argument);
}

TEST_CASE("stability margin on the linear problem", "[flow]") {
    // lambda = -1; margin |1 + h*lambda|
    ControlSet c = decay_problem(1.0);
    c.x0 = Image(4, 4, 0.5);
    c.b = Image(4, 4, 0.0);
    const Trajectory t1 = forward_euler(c, 10);  // h = 0.1
    REQUIRE(stability_margin(t1, c) == Catch::Approx(0.9).margin(1e-10));

    ControlSet c2 = c;
    c2.T = 25.0;
    Trajectory t2;
    t2.scheme = Scheme::Euler;
    t2.depth = 10;  // h = 2.5, unstable
    t2.T = 25.0;
    t2.states.assign(3, c.x0);
    REQUIRE(stability_margin(t2, c2) == Catch::Approx(1.5).margin(1e-10));
}

TEST_CASE("power iteration agrees with the dense Jacobian", "[flow]") {
    Rng rng(3);
    ControlSet c;
    c.T = 0.5;
    // monotone activations keep the Jacobian definite with a clear extreme
    for (int k = 0; k < 2; ++k) {
        c.bank.filters.push_back(testutil::random_filter(5, rng, true, 0.9));
        c.bank.activations.push_back(std::make_shared<gradstop::ActivationSpline>(
            gradstop::ActivationSpline::init_linear(0.2 + 0.2 * k, 63)));
    }
    c.opA = DataOperator::identity();
    c.b = random_image(8, 8, rng);
    c.x0 = random_image(8, 8, rng);

    const auto M = testutil::assemble_dense(8, 8, [&](const Image& e) {
        Image raw = adjoint_rhs(c.x0, e, c);
        raw *= -1.0;
        return raw;
    });
    const auto ev = testutil::jacobi_eigenvalues(M);
    double extreme = ev.front();
    if (std::abs(ev.back()) > std::abs(extreme)) extreme = ev.back();

    const double est = detail::jacobian_extreme_eigenvalue(c.x0, c);
    REQUIRE(testutil::rel_error(est, extreme) < 0.05);
}

TEST_CASE("transformed and untransformed Euler flows coincide bit for bit", "[flow]") {
    const ControlSet c = toy_control(1.75);
    const int S = 64;
    const Trajectory traj = forward_euler(c, S);
    // untransformed flow: step dt = T/S on xdot = f(x) up to time T
    const double dt = c.T / S;
    Image x = c.x0;
    for (int s = 0; s < S; ++s) {
        axpy(dt, f_rhs(x, c), x);
        REQUIRE(x[0] == traj.states[static_cast<std::size_t>(s) + 1][0]);
        REQUIRE(x[1] == traj.states[static_cast<std::size_t>(s) + 1][1]);
    }
}

TEST_CASE("Euler semigroup property", "[flow]") {
    const ControlSet c = toy_control(1.0);
    const int S = 8, S1 = 4;  // binary step sizes keep the split exact
    const Trajectory full = forward_euler(c, S);

    ControlSet c2 = c;
    c2.T = c.T * (S - S1) / S;
    c2.x0 = full.states[static_cast<std::size_t>(S1)];
    const Trajectory tail = forward_euler(c2, S - S1);
    for (int s = 0; s <= S - S1; ++s) {
        const Image& a = tail.states[static_cast<std::size_t>(s)];
        const Image& b = full.states[static_cast<std::size_t>(S1 + s)];
        REQUIRE(a[0] == b[0]);
        REQUIRE(a[1] == b[1]);
    }
}

TEST_CASE("trajectory T-sensitivity matches t*f(x(t))", "[flow]") {
    // dx/dT = t f(x(t)) holds in continuum; the finite-depth gap is O(1/S)
    const double T = 1.2, dT = 1e-4;
    const ControlSet c = toy_control(T);
    auto norm_rel_gap = [&](int S) {
        const Trajectory traj = forward_euler(toy_control(T), S);
        const Trajectory plus = forward_euler(toy_control(T + dT), S);
        const Trajectory minus = forward_euler(toy_control(T - dT), S);
        double worst = 0.0;
        for (double frac : {0.1, 0.4, 0.7, 1.0}) {
            const int s = static_cast<int>(frac * S);
            const double t = static_cast<double>(s) / S;
            Image ref = f_rhs(traj.states[static_cast<std::size_t>(s)], c);
            ref *= t;
            Image fd = plus.states[static_cast<std::size_t>(s)];
            fd -= minus.states[static_cast<std::size_t>(s)];
            fd *= 1.0 / (2.0 * dT);
            fd -= ref;
            worst = std::max(worst, l2_norm(fd) / std::max(l2_norm(ref), 1e-30));
        }
        return worst;
    };
    const double gap_1k = norm_rel_gap(1000);
    const double gap_8k = norm_rel_gap(8000);
    REQUIRE(gap_1k < 1e-2);
    REQUIRE(gap_8k < 1e-3);
    REQUIRE(gap_8k < gap_1k);
}
