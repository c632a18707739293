#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gradstop/tvl2.hpp"
#include "testutil.hpp"

using namespace gradstop;
using testutil::random_image;

TEST_CASE("tv_energy closed-form cases", "[tvl2]") {
    TvConfig cfg;
    cfg.nu = 0.05;
    cfg.eps = 1e-6;

    const Image c(12, 10, 0.4);
    REQUIRE(tv_energy(c, c, cfg) ==
            Catch::Approx(cfg.nu * static_cast<double>(c.size()) * cfg.eps).epsilon(1e-12));

    Rng rng(1);
    const Image u = random_image(9, 9, rng), g = random_image(9, 9, rng);
    TvConfig plain = cfg;
    plain.nu = 0.0;
    Image d = u;
    d -= g;
    REQUIRE(tv_energy(u, g, plain) == Catch::Approx(sq_norm(d)));

    REQUIRE_THROWS_AS(tv_energy(u, Image(3, 3, 0.0), cfg), std::invalid_argument);
}

TEST_CASE("tv_grad matches finite differences", "[tvl2]") {
    Rng rng(2);
    const Image u = random_image(8, 7, rng), g = random_image(8, 7, rng);
    TvConfig cfg;
    cfg.nu = 0.08;
    cfg.eps = 1e-3;  // keep the energy smooth enough for the FD probe
    const Image grad = tv_grad(u, g, cfg);
    for (std::size_t i = 0; i < u.size(); i += 3) {
        const double fd = testutil::central_diff5(
            [&](double v) {
                Image uu = u;
                uu[i] = v;
                return tv_energy(uu, g, cfg);
            },
            u[i], 1e-5);
        if (std::abs(fd) > 1e-9) REQUIRE(testutil::rel_error(grad[i], fd) < 1e-5);
    }

    TvConfig plain = cfg;
    plain.nu = 0.0;
    REQUIRE(sq_norm(tv_grad(g, g, plain)) == 0.0);
}

TEST_CASE("descent decreases the energy monotonically", "[tvl2]") {
    Rng rng(3);
    Image truth(32, 32, 0.0);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) truth.px(x, y) = (x < 16) ? 0.25 : 0.75;
    const Image noisy = add_gaussian_noise(truth, 0.1, 4);

    TvConfig cfg;
    cfg.nu = 0.05;
    cfg.step = 1e-4;
    Image u = noisy;
    double prev = tv_energy(u, noisy, cfg);
    for (int k = 0; k < 200; ++k) {
        axpy(-cfg.step, tv_grad(u, noisy, cfg), u);
        const double e = tv_energy(u, noisy, cfg);
        REQUIRE(e <= prev + 1e-12);
        prev = e;
    }
}

TEST_CASE("sweep shows the interior PSNR maximum", "[tvl2][.slow]") {
    Rng rng(5);
    Image truth(64, 64, 0.0);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            truth.px(x, y) = 0.2 + 0.15 * std::sin(0.2 * x) + ((y > 32) ? 0.4 : 0.0);
            if (x > 20 && x < 44 && y > 10 && y < 30) truth.px(x, y) = 0.85;
        }
    const Image noisy = add_gaussian_noise(truth, 0.1, 6);

    std::vector<int> iter_grid;
    for (int k = 50; k <= 8000; k += 50) iter_grid.push_back(k);
    // nu large enough that the TV minimizer itself over-smooths: the PSNR
    // then peaks strictly inside the descent
    const std::vector<double> nus{0.0, 0.2, 0.4};
    TvConfig cfg;
    cfg.step = 1e-3;
    const auto rows = tv_sweep(noisy, truth, nus, iter_grid, cfg);
    REQUIRE(rows.size() == nus.size() * iter_grid.size());

    const std::size_t n = iter_grid.size();
    // nu = 0: the data term alone keeps u at the noisy image; PSNR is flat
    for (std::size_t i = 0; i < n; ++i) REQUIRE(rows[i].psnr == Catch::Approx(rows[0].psnr).margin(1e-9));

    // mid-range nu: interior maximum (peak strictly above both grid ends)
    for (std::size_t col = 1; col < nus.size(); ++col) {
        double best = -1e300;
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = rows[col * n + i].psnr;
            if (p > best) {
                best = p;
                best_i = i;
            }
        }
        REQUIRE(best_i > 0);
        REQUIRE(best_i < n - 1);
        REQUIRE(best > rows[col * n].psnr);
        REQUIRE(best > rows[col * n + n - 1].psnr);
    }

    // determinism
    const auto again = tv_sweep(noisy, truth, nus, iter_grid, cfg);
    for (std::size_t i = 0; i < rows.size(); ++i) REQUIRE(again[i].psnr == rows[i].psnr);
}
