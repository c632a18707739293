#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gradstop/csv.hpp"
#include "gradstop/stopping.hpp"

namespace gradstop {

// Regularized data fitting in R^2: x0=(1,2), xg=(3/2,1/2), b=(1,1/2), A=Id,
// K = [[1,-1],[0,0]] (x-direction forward difference; realized as a filter
// on a 1x2 image, where the reflect boundary yields the zero second row)
// and the Charbonnier activation phi(y)=y/sqrt(y^2+1).

inline Image toy_vec(double a, double b) { return Image(2, 1, std::vector<double>{a, b}); }

inline ControlSet toy_control(double T) {
    ControlSet c;
    c.T = T;
    Filter k(3);
    k.tap(1, 1) = 1.0;
    k.tap(1, 2) = -1.0;
    c.bank.filters.push_back(k);
    c.bank.activations.push_back(std::make_shared<CharbonnierActivation>());
    c.opA = DataOperator::identity();
    c.b = toy_vec(1.0, 0.5);
    c.x0 = toy_vec(1.0, 2.0);
    return c;
}

inline Image toy_ground_truth() { return toy_vec(1.5, 0.5); }

// T grid 0.05*N intersected with [0.1, 3]
inline std::vector<double> toy_T_grid() {
    std::vector<double> grid;
    for (int i = 2; i <= 60; ++i) grid.push_back(0.05 * i);
    return grid;
}

struct ToyReport {
    std::vector<double> T_grid;
    StoppingCurve curve;
    std::size_t argmin_index = 0;
    double T_opt = 0.0;
    SecondOrderResult second_order;
    std::optional<double> foc_crossing;
    std::optional<std::size_t> crossing_cell;
    std::vector<Trajectory> trajectories;  // fan over the grid
    Image x_inf;                           // unique stationary point of the flow
};

// Stationary point of f by Newton on the dense 2x2 Jacobian.
inline Image toy_stationary_point(const ControlSet& c) {
    Image x = c.x0;
    for (int it = 0; it < 100; ++it) {
        const Image fx = f_rhs(x, c);
        if (l2_norm(fx) < 1e-14) break;
        // columns of -Df(x) via the adjoint rhs on unit vectors
        const Image e1 = toy_vec(1.0, 0.0), e2 = toy_vec(0.0, 1.0);
        const Image c1 = adjoint_rhs(x, e1, c);
        const Image c2 = adjoint_rhs(x, e2, c);
        const double a = c1[0], bb = c2[0], cc = c1[1], d = c2[1];
        const double det = a * d - bb * cc;
        // Newton step: x <- x + (-Df)^{-1} f
        x[0] += (d * fx[0] - bb * fx[1]) / det;
        x[1] += (-cc * fx[0] + a * fx[1]) / det;
    }
    return x;
}

inline ToyReport run_toy2d(int depth = 100, int quad_points = 21) {
    ToyReport rep;
    rep.T_grid = toy_T_grid();
    const Image xg = toy_ground_truth();
    const ControlSet base = toy_control(0.0);
    rep.curve = sweep_T(base, rep.T_grid, DepthRule::fixed(depth), xg, Scheme::Euler);
    rep.argmin_index = argmin_energy(rep.curve);
    rep.T_opt = rep.T_grid[rep.argmin_index];
    rep.foc_crossing = foc_zero_crossing(rep.curve);
    rep.crossing_cell = foc_crossing_cell(rep.curve);

    ControlSet opt = toy_control(rep.T_opt);
    rep.second_order = second_order_form(opt, depth, xg, gauss_legendre(quad_points));

    rep.trajectories.reserve(rep.T_grid.size());
    for (double T : rep.T_grid) {
        ControlSet c = toy_control(T);
        rep.trajectories.push_back(forward_euler(c, depth));
    }
    rep.x_inf = toy_stationary_point(base);
    return rep;
}

inline void write_toy_report(const ToyReport& rep, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto path = [&dir](const char* name) { return (std::filesystem::path(dir) / name).string(); };

    CsvWriter curve(path("toy_curve.csv"), "T,J,foc");
    for (std::size_t i = 0; i < rep.T_grid.size(); ++i)
        curve.row(csv17(rep.curve.T_values[i]), csv17(rep.curve.energies[i]), csv17(rep.curve.foc[i]));

    CsvWriter fan(path("toy_trajectories.csv"), "T,s,t,x1,x2");
    for (const Trajectory& traj : rep.trajectories)
        for (std::size_t s = 0; s < traj.states.size(); ++s)
            fan.row(csv17(traj.T), s, csv17(static_cast<double>(s) / traj.depth),
                    csv17(traj.states[s][0]), csv17(traj.states[s][1]));

    CsvWriter summary(path("toy_summary.csv"),
                      "T_opt,J_opt,foc_crossing_T,second_order_value,quadratic_form,h1_norm_sq,x_inf_1,x_inf_2");
    summary.row(csv17(rep.T_opt), csv17(rep.curve.energies[rep.argmin_index]),
                csv17(rep.foc_crossing.value_or(-1.0)), csv17(rep.second_order.value),
                csv17(rep.second_order.quadratic_form), csv17(rep.second_order.h1_norm_sq),
                csv17(rep.x_inf[0]), csv17(rep.x_inf[1]));
}

}  // namespace gradstop
