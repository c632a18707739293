#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "gradstop/spectral.hpp"
#include "gradstop/toy2d.hpp"
#include "testutil.hpp"

using namespace gradstop;
using testutil::random_bank;
using testutil::random_image;

namespace {

KernelBank linear_bank(const Filter& f, double slope = 1.0) {
    KernelBank bank;
    bank.filters.push_back(f);
    bank.activations.push_back(std::make_shared<LinearActivation>(slope));
    return bank;
}

}  // namespace

TEST_CASE("rayleigh quotient of the linear case", "[spectral]") {
    Rng rng(1);
    const Filter f = testutil::random_filter(5, rng, true, 0.9);
    const KernelBank bank = linear_bank(f);
    const Image v = random_image(10, 10, rng, -1.0, 1.0);

    const double lam = rayleigh(bank, v);
    REQUIRE(lam >= 0.0);  // quadratic form ||Kv||^2 / ||v||^2
    REQUIRE(lam == Catch::Approx(sq_norm(conv2d(v, f)) / sq_norm(v)));

    Image v2 = v;
    v2 *= 2.0;
    REQUIRE(rayleigh(bank, v2) == Catch::Approx(lam));

    REQUIRE_THROWS_AS(rayleigh(bank, Image(10, 10, 0.0)), std::invalid_argument);
}

TEST_CASE("rayleigh minimizes the residual over lambda", "[spectral]") {
    Rng rng(2);
    const KernelBank bank = random_bank(3, 5, 63, rng);
    const Image v = random_image(9, 9, rng, -0.5, 0.5);
    const Image g = reg_grad(bank, v);
    // closed-form argmin of ||g - lambda v||^2
    const double want = dot(g, v) / sq_norm(v);
    REQUIRE(std::abs(rayleigh(bank, v) - want) < 1e-12);

    const double at_min = residual_loss(bank, v);
    for (double d : {-0.01, 0.01}) {
        Image r = g;
        axpy(-(want + d), v, r);
        REQUIRE(sq_norm(r) > at_min);
    }
}

TEST_CASE("residual of an exact eigenfunction vanishes", "[spectral]") {
    // 1x2 forward-difference filter: K^T K = [[1,-1],[-1,1]], eigenpairs
    // (0,(1,1)) and (2,(1,-1)) exactly
    Filter k(3);
    k.tap(1, 1) = 1.0;
    k.tap(1, 2) = -1.0;
    const KernelBank bank = linear_bank(k);
    const Image v = toy_vec(1.0, -1.0);
    REQUIRE(residual_loss(bank, v) <= 1e-20);
    REQUIRE(rayleigh(bank, v) == Catch::Approx(2.0));

    Rng rng(3);
    const Image any = random_image(6, 6, rng);
    REQUIRE(residual_loss(linear_bank(testutil::random_filter(5, rng, true)), any) >= 0.0);
}

TEST_CASE("residual gradient matches finite differences", "[spectral]") {
    Rng rng(4);
    const KernelBank bank = random_bank(2, 5, 63, rng);
    const Image v = random_image(8, 8, rng, -0.5, 0.5);
    const Image g = residual_loss_grad(bank, v);
    for (std::size_t i = 0; i < v.size(); i += 5) {
        const double fd = testutil::central_diff(
            [&](double t) {
                Image vv = v;
                vv[i] = t;
                return residual_loss(bank, vv);
            },
            v[i], 1e-6);
        if (std::abs(fd) > 1e-8) REQUIRE(testutil::rel_error(g[i], fd) < 1e-4);
    }
}

TEST_CASE("contrast factors", "[spectral]") {
    REQUIRE(contrast_factor(0.0, 1.0, 10) == 1.0);
    REQUIRE(contrast_factor(11.696, 0.054, 1) == Catch::Approx(0.368).margin(5e-4));
    REQUIRE(contrast_factor(-0.5, 1.0, 10) > 1.0);
    REQUIRE_THROWS_AS(contrast_factor(1.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("linear-case eigenpairs land on the dense spectrum", "[spectral][.slow]") {
    Rng rng(5);
    const Filter f = testutil::random_filter(7, rng, true, 0.9);
    const KernelBank bank = linear_bank(f);

    const auto M = testutil::assemble_dense(16, 16, [&](const Image& e) { return reg_grad(bank, e); });
    const auto spectrum = testutil::jacobi_eigenvalues(M);

    SpectralConfig cfg;
    cfg.count = 4;
    cfg.size = 16;
    cfg.iters = 20000;
    cfg.seed = 9;
    cfg.stop_residual = 1e-8;

    std::vector<Image> source{random_image(32, 32, rng)};
    const auto pairs = solve_eigenpairs(bank, cfg, source);
    REQUIRE(pairs.size() == 4);
    for (const auto& pair : pairs) {
        double best = 1e300;
        for (double lam : spectrum) best = std::min(best, std::abs(lam - pair.lambda));
        REQUIRE(best < 1e-6);
    }

    // determinism
    const auto again = solve_eigenpairs(bank, cfg, source);
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        REQUIRE(again[j].lambda == pairs[j].lambda);
        REQUIRE(testutil::max_abs_diff(again[j].v, pairs[j].v) == 0.0);
    }
}

TEST_CASE("one-step identity and rayleigh stationarity at converged pairs", "[spectral][.slow]") {
    Rng rng(6);
    const KernelBank bank = random_bank(2, 5, 63, rng, 0.9, 0.3);

    SpectralConfig cfg;
    cfg.count = 3;
    cfg.size = 16;
    cfg.iters = 4000;
    cfg.seed = 31;
    cfg.stop_residual = 1e-7;

    std::vector<Image> source{random_image(48, 48, rng)};
    const auto pairs = solve_eigenpairs(bank, cfg, source);

    const double T = 1.0;
    const int S = 20;
    for (const auto& pair : pairs) {
        // v - (T/S) sum K^T Phi(Kv) = (1 - lambda T/S) v up to the residual
        Image lhs = pair.v;
        axpy(-T / S, reg_grad(bank, pair.v), lhs);
        axpy(-contrast_factor(pair.lambda, T, S), pair.v, lhs);
        REQUIRE(l2_norm(lhs) <= (T / S) * pair.residual * (1.0 + 1e-12) + 1e-15);

        if (pair.residual < 1e-5) {
            // directional derivative of the Rayleigh quotient vanishes
            for (int trial = 0; trial < 3; ++trial) {
                Image dir = random_image(16, 16, rng, -1.0, 1.0);
                dir *= 1.0 / l2_norm(dir);
                const double fd = testutil::central_diff(
                    [&](double t) {
                        Image vv = pair.v;
                        axpy(t, dir, vv);
                        return rayleigh(bank, vv);
                    },
                    0.0, 1e-6);
                REQUIRE(std::abs(fd) < 1e-3);
            }
        }
    }
}
