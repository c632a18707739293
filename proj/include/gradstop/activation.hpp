#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <vector>

namespace gradstop {

// Centered quadratic B-spline B2 on (-1.5, 1.5), unit integral.
inline double bspline2(double t) {
    const double a = std::abs(t);
    if (a >= 1.5) return 0.0;
    if (a <= 0.5) return 0.75 - t * t;
    const double s = a - 1.5;
    return 0.5 * s * s;
}

inline double bspline2_d1(double t) {
    const double a = std::abs(t);
    if (a >= 1.5) return 0.0;
    if (a <= 0.5) return -2.0 * t;
    return (t > 0.0) ? t - 1.5 : t + 1.5;
}

// a.e. second derivative; half-open pieces [-1.5,-0.5), [-0.5,0.5), [0.5,1.5)
inline double bspline2_d2(double t) {
    if (t < -1.5 || t >= 1.5) return 0.0;
    if (t < -0.5 || t >= 0.5) return 1.0;
    return -2.0;
}

// Scalar activation phi with derivatives and the integrated potential rho
// (normalized so min rho = 0). Componentwise application realizes Phi.
class Activation {
public:
    virtual ~Activation() = default;
    virtual double phi(double y) const = 0;
    virtual double dphi(double y) const = 0;
    virtual double d2phi(double y) const = 0;
    virtual double potential(double y) const = 0;
    // squared weight norm when the activation lives in the spline space
    virtual std::optional<double> weight_norm_sq() const { return std::nullopt; }

    void phi_n(const double* y, double* out, std::size_t n) const {
        for (std::size_t i = 0; i < n; ++i) out[i] = phi(y[i]);
    }
    void dphi_n(const double* y, double* out, std::size_t n) const {
        for (std::size_t i = 0; i < n; ++i) out[i] = dphi(y[i]);
    }
    void d2phi_n(const double* y, double* out, std::size_t n) const {
        for (std::size_t i = 0; i < n; ++i) out[i] = d2phi(y[i]);
    }
};

// phi = sum_j w_j psi_j with psi_j(y) = B2((y - mu_j)/Delta), equidistant
// centers mu_j in [-1,1], Delta = 2/(N_w - 1). Quadratic splines are C^1;
// d2phi is the piecewise-constant a.e. derivative of dphi.
class ActivationSpline final : public Activation {
public:
    explicit ActivationSpline(std::vector<double> weights) : weights_(std::move(weights)) {
        if (weights_.size() < 2)
            throw std::invalid_argument("ActivationSpline: need at least 2 weights");
        delta_ = 2.0 / (static_cast<double>(weights_.size()) - 1.0);
    }

    ActivationSpline(const ActivationSpline& o) : weights_(o.weights_), delta_(o.delta_) {
        std::lock_guard<std::mutex> lk(o.mu_);
        table_ = o.table_;
    }
    ActivationSpline& operator=(const ActivationSpline& o) {
        if (this != &o) {
            std::shared_ptr<const PotentialTable> t;
            {
                std::lock_guard<std::mutex> lk(o.mu_);
                t = o.table_;
            }
            std::lock_guard<std::mutex> lk(mu_);
            weights_ = o.weights_;
            delta_ = o.delta_;
            table_ = std::move(t);
        }
        return *this;
    }

    // weights w_j = slope * mu_j reproduce slope*y exactly away from the
    // interval ends (B-spline linear reproduction at the Greville points)
    static ActivationSpline init_linear(double slope = 0.1, int n_weights = 63) {
        std::vector<double> w(static_cast<std::size_t>(n_weights));
        const double delta = 2.0 / (n_weights - 1);
        for (int j = 0; j < n_weights; ++j) w[static_cast<std::size_t>(j)] = slope * (-1.0 + j * delta);
        return ActivationSpline(std::move(w));
    }

    int n_weights() const { return static_cast<int>(weights_.size()); }
    double spacing() const { return delta_; }
    double center(int j) const { return -1.0 + j * delta_; }
    const std::vector<double>& weights() const { return weights_; }

    double basis_eval(int j, double y) const { return bspline2((y - center(j)) / delta_); }
    double basis_d1(int j, double y) const { return bspline2_d1((y - center(j)) / delta_) / delta_; }
    double basis_d2(int j, double y) const { return bspline2_d2((y - center(j)) / delta_) / (delta_ * delta_); }

    // indices of the (at most 3) bases whose support contains y
    void active_range(double y, int& j0, int& j1) const {
        const double u = (y + 1.0) / delta_;
        j0 = std::max(0, static_cast<int>(std::ceil(u - 1.5)));
        j1 = std::min(n_weights() - 1, static_cast<int>(std::floor(u + 1.5)));
    }

    double phi(double y) const override {
        int j0, j1;
        active_range(y, j0, j1);
        double s = 0.0;
        for (int j = j0; j <= j1; ++j) s += weights_[static_cast<std::size_t>(j)] * bspline2((y - center(j)) / delta_);
        return s;
    }

    double dphi(double y) const override {
        int j0, j1;
        active_range(y, j0, j1);
        double s = 0.0;
        for (int j = j0; j <= j1; ++j) s += weights_[static_cast<std::size_t>(j)] * bspline2_d1((y - center(j)) / delta_);
        return s / delta_;
    }

    double d2phi(double y) const override {
        int j0, j1;
        active_range(y, j0, j1);
        double s = 0.0;
        for (int j = j0; j <= j1; ++j) s += weights_[static_cast<std::size_t>(j)] * bspline2_d2((y - center(j)) / delta_);
        return s / (delta_ * delta_);
    }

    // rho(y) = int phi, tabulated by composite Simpson at step Delta/8 over
    // [-1-1.5D, 1+1.5D], shifted so the tabulated minimum is exactly 0.
    // Sub-node remainders use a 3-point Simpson on [node, y]; node spacing
    // divides the knot spacing, so each panel sits inside one quadratic piece
    // and the antiderivative is exact up to roundoff.
    double potential(double y) const override {
        const PotentialTable& tb = table();
        if (y <= tb.ylo) return -tb.offset;
        const double yhi = tb.ylo + tb.h * static_cast<double>(tb.cumulative.size() - 1);
        if (y >= yhi) return tb.cumulative.back() - tb.offset;
        std::size_t i = static_cast<std::size_t>((y - tb.ylo) / tb.h);
        if (i >= tb.cumulative.size() - 1) i = tb.cumulative.size() - 2;
        const double yi = tb.ylo + tb.h * static_cast<double>(i);
        const double d = y - yi;
        const double rem = d / 6.0 * (phi(yi) + 4.0 * phi(yi + 0.5 * d) + phi(y));
        return tb.cumulative[i] + rem - tb.offset;
    }

    std::optional<double> weight_norm_sq() const override {
        double s = 0.0;
        for (double w : weights_) s += w * w;
        return s;
    }

private:
    struct PotentialTable {
        double ylo;
        double h;
        double offset;
        std::vector<double> cumulative;
    };

    const PotentialTable& table() const {
        std::lock_guard<std::mutex> lk(mu_);
        if (!table_) table_ = std::make_shared<const PotentialTable>(build_table());
        return *table_;
    }

    PotentialTable build_table() const {
        PotentialTable tb;
        tb.ylo = -1.0 - 1.5 * delta_;
        tb.h = delta_ / 8.0;
        const std::size_t sub = 8 * (static_cast<std::size_t>(n_weights()) + 2);  // even
        std::vector<double> f(sub + 1);
        for (std::size_t i = 0; i <= sub; ++i) f[i] = phi(tb.ylo + tb.h * static_cast<double>(i));
        tb.cumulative.assign(sub + 1, 0.0);
        for (std::size_t k = 0; k + 2 <= sub; k += 2) {
            tb.cumulative[k + 1] = tb.cumulative[k] + tb.h / 12.0 * (5.0 * f[k] + 8.0 * f[k + 1] - f[k + 2]);
            tb.cumulative[k + 2] = tb.cumulative[k] + tb.h / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
        }
        tb.offset = *std::min_element(tb.cumulative.begin(), tb.cumulative.end());
        return tb;
    }

    std::vector<double> weights_;
    double delta_;
    mutable std::mutex mu_;
    mutable std::shared_ptr<const PotentialTable> table_;
};

// phi(y) = slope * y; potential slope*y^2/2
class LinearActivation final : public Activation {
public:
    explicit LinearActivation(double slope = 1.0) : slope_(slope) {}
    double phi(double y) const override { return slope_ * y; }
    double dphi(double) const override { return slope_; }
    double d2phi(double) const override { return 0.0; }
    double potential(double y) const override { return 0.5 * slope_ * y * y; }

private:
    double slope_;
};

// phi(y) = y / sqrt(y^2 + 1); potential is the Charbonnier penalty
// sqrt(y^2 + 1) - 1.
class CharbonnierActivation final : public Activation {
public:
    double phi(double y) const override { return y / std::sqrt(y * y + 1.0); }
    double dphi(double y) const override {
        const double q = y * y + 1.0;
        return 1.0 / (q * std::sqrt(q));
    }
    double d2phi(double y) const override {
        const double q = y * y + 1.0;
        return -3.0 * y / (q * q * std::sqrt(q));
    }
    double potential(double y) const override { return std::sqrt(y * y + 1.0) - 1.0; }
};

}  // namespace gradstop
