#pragma once

#include <cmath>
#include <stdexcept>

#include "gradstop/image.hpp"

namespace gradstop {

// 9x9 normalized Gaussian blur filter, taps sampled at integer offsets then
// divided by their sum.
inline Filter blur_filter(double tau) {
    if (tau <= 0.0) throw std::invalid_argument("blur_filter: tau must be > 0");
    Filter f(9);
    const int r = f.radius();
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * tau * tau));
            f.tap(dy + r, dx + r) = v;
            sum += v;
        }
    for (std::size_t i = 0; i < f.tap_count(); ++i) f[i] /= sum;
    return f;
}

// Linear data operator A of the fidelity term (weight/2)*||Ax - b||^2.
// The weight is part of the operator so flow, stopping conditions and
// training all see the same scaled A^T A (1/sigma^2 for noise-adaptive use).
struct DataOperator {
    enum class Kind { Identity, GaussianBlur };

    Kind kind = Kind::Identity;
    double tau = 0.0;
    double weight = 1.0;
    Filter blur;

    static DataOperator identity(double weight = 1.0) {
        if (weight <= 0.0) throw std::invalid_argument("DataOperator: weight must be > 0");
        DataOperator op;
        op.weight = weight;
        return op;
    }

    static DataOperator gaussian_blur(double tau, double weight = 1.0) {
        if (weight <= 0.0) throw std::invalid_argument("DataOperator: weight must be > 0");
        DataOperator op;
        op.kind = Kind::GaussianBlur;
        op.tau = tau;
        op.weight = weight;
        op.blur = blur_filter(tau);
        return op;
    }
};

inline Image apply(const DataOperator& op, const Image& x) {
    if (op.kind == DataOperator::Kind::Identity) return x;
    return conv2d(x, op.blur, BoundaryRule::SymmetricReflect);
}

inline Image apply_adjoint(const DataOperator& op, const Image& y) {
    if (op.kind == DataOperator::Kind::Identity) return y;
    return conv2d_adjoint(y, op.blur, BoundaryRule::SymmetricReflect);
}

// weight * A^T (A x - b)
inline Image data_grad(const DataOperator& op, const Image& x, const Image& b) {
    Image ax = apply(op, x);
    if (!ax.same_size(b)) throw std::invalid_argument("data_grad: size mismatch");
    ax -= b;
    Image g = apply_adjoint(op, ax);
    g *= op.weight;
    return g;
}

// (weight/2) * ||A x - b||^2
inline double data_energy(const DataOperator& op, const Image& x, const Image& b) {
    Image ax = apply(op, x);
    if (!ax.same_size(b)) throw std::invalid_argument("data_energy: size mismatch");
    ax -= b;
    return 0.5 * op.weight * sq_norm(ax);
}

// weight * A^T A p (the data-term Hessian applied to p)
inline Image normal_apply(const DataOperator& op, const Image& p) {
    Image g = apply_adjoint(op, apply(op, p));
    g *= op.weight;
    return g;
}

}  // namespace gradstop
