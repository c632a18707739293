#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradstop/dataset.hpp"
#include "gradstop/flow.hpp"
#include "gradstop/parallel.hpp"

namespace gradstop {

// The learnable controls of one flow: stopping time, kernel taps and
// activation spline weights.
struct FlowParams {
    double T = 1.0;
    std::vector<Filter> kernels;
    std::vector<std::vector<double>> weights;

    int count() const { return static_cast<int>(kernels.size()); }
};

inline KernelBank make_bank(const FlowParams& p) {
    KernelBank bank;
    bank.filters = p.kernels;
    for (const auto& w : p.weights) bank.activations.push_back(std::make_shared<ActivationSpline>(w));
    return bank;
}

// Exact Euclidean projection onto {sum of taps = 0, ||kappa||_F <= 1}:
// mean removal, then radial scaling (the ball is centered in the zero-mean
// subspace, so the order is exact).
inline void proj_kernel(Filter& f) {
    const double mean = f.tap_sum() / static_cast<double>(f.tap_count());
    for (std::size_t i = 0; i < f.tap_count(); ++i) f[i] -= mean;
    const double n = f.frob_norm();
    if (n > 1.0)
        for (std::size_t i = 0; i < f.tap_count(); ++i) f[i] /= n;
}

// radial projection onto ||w||_2^2 <= 1
inline void proj_weights(std::vector<double>& w) {
    double n = 0.0;
    for (double v : w) n += v * v;
    n = std::sqrt(n);
    if (n > 1.0)
        for (double& v : w) v /= n;
}

inline double proj_T(double T) { return T < 0.0 ? 0.0 : T; }

// i.i.d. standard normal taps, projected into the constraint set
inline std::vector<Filter> init_kernels(int n_kernels, int kernel_size, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Filter> out;
    out.reserve(static_cast<std::size_t>(n_kernels));
    for (int k = 0; k < n_kernels; ++k) {
        Filter f(kernel_size);
        for (std::size_t i = 0; i < f.tap_count(); ++i) f[i] = rng.normal();
        proj_kernel(f);
        out.push_back(std::move(f));
    }
    return out;
}

struct ParamGradients {
    double dT = 0.0;
    std::vector<Filter> dkernels;
    std::vector<std::vector<double>> dweights;

    static ParamGradients zeros_like(const FlowParams& p) {
        ParamGradients g;
        g.dkernels.assign(p.kernels.size(), Filter(p.kernels.empty() ? 1 : p.kernels[0].size()));
        for (const auto& w : p.weights) g.dweights.emplace_back(w.size(), 0.0);
        return g;
    }

    void add(const ParamGradients& o) {
        dT += o.dT;
        for (std::size_t k = 0; k < dkernels.size(); ++k)
            for (std::size_t i = 0; i < dkernels[k].tap_count(); ++i) dkernels[k][i] += o.dkernels[k][i];
        for (std::size_t k = 0; k < dweights.size(); ++k)
            for (std::size_t i = 0; i < dweights[k].size(); ++i) dweights[k][i] += o.dweights[k][i];
    }

    void scale(double s) {
        dT *= s;
        for (auto& f : dkernels)
            for (std::size_t i = 0; i < f.tap_count(); ++i) f[i] *= s;
        for (auto& w : dweights)
            for (double& v : w) v *= s;
    }
};

class BatchDivergedError : public std::runtime_error {
public:
    BatchDivergedError(std::size_t item, int step)
        : std::runtime_error("flow diverged on batch item " + std::to_string(item) +
                             " at step " + std::to_string(step)),
          item(item), step(step) {}
    std::size_t item;
    int step;
};

namespace detail {

// Parameter-gradient and vector-Jacobian machinery for one f evaluation.
// Given the state x and a response gradient u on f(x), accumulates
//   dw_{k,j} += -scale * <K_k u, psi_j(K_k x)>
//   dkappa_k += -scale * (taps-grad of <u, K^T phi(Kx)> + <dphi(Kx).(K u), K x>-term)
// and returns Df(x)^T u = -(reg Hessian + weight A^T A) u.
inline Image f_vjp(const FlowParams& p, const KernelBank& bank, const DataOperator& opA,
                   const Image& x, const Image& u, double scale, ParamGradients& grads) {
    Image back = normal_apply(opA, u);  // weight A^T A u
    for (int k = 0; k < bank.count(); ++k) {
        const Filter& f = bank.filter(k);
        const auto& spline = static_cast<const ActivationSpline&>(bank.activation(k));
        const Image r = conv2d(x, f);   // K x
        const Image pr = conv2d(u, f);  // K u

        Image phir(r.width(), r.height());
        Image dphir_pr(r.width(), r.height());
        auto& dw = grads.dweights[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < r.size(); ++i) {
            phir[i] = spline.phi(r[i]);
            dphir_pr[i] = spline.dphi(r[i]) * pr[i];
            int j0, j1;
            spline.active_range(r[i], j0, j1);
            for (int j = j0; j <= j1; ++j)
                dw[static_cast<std::size_t>(j)] -= scale * pr[i] * spline.basis_eval(j, r[i]);
        }

        back += conv2d_adjoint(dphir_pr, f);  // K^T DPhi(Kx) K u

        Filter dk = conv2d_tap_gradient(u, phir, f.size());
        const Filter dk2 = conv2d_tap_gradient(x, dphir_pr, f.size());
        auto& gk = grads.dkernels[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < gk.tap_count(); ++i) gk[i] -= scale * (dk[i] + dk2[i]);
    }
    back *= -1.0;
    return back;
}

struct ItemResult {
    double loss = 0.0;
    bool diverged = false;
    int diverged_step = 0;
    ParamGradients grads;
};

// Forward + exact reverse pass through the discrete scheme for one sample.
inline ItemResult item_loss_grad(const FlowParams& p, const KernelBank& bank, const DataOperator& opA,
                                 const TrainSample& sample, int S, Scheme scheme, bool want_grads) {
    ItemResult res;
    ControlSet c;
    c.T = p.T;
    c.bank = bank;
    c.opA = opA;
    c.b = sample.x0;
    c.x0 = sample.x0;

    Trajectory traj;
    try {
        traj = (scheme == Scheme::Euler) ? forward_euler(c, S) : forward_heun(c, S);
    } catch (const DivergedError& e) {
        res.diverged = true;
        res.diverged_step = e.step;
        return res;
    }

    Image diff = traj.terminal();
    diff -= sample.xg;
    res.loss = 0.5 * sq_norm(diff);
    if (!want_grads) return res;

    res.grads = ParamGradients::zeros_like(p);
    const double h = p.T / S;
    Image lambda = std::move(diff);  // dJ/dx_S

    if (scheme == Scheme::Euler) {
        for (int s = S - 1; s >= 0; --s) {
            const Image& xs = traj.states[static_cast<std::size_t>(s)];
            res.grads.dT += dot(lambda, f_rhs(xs, c)) / S;
            Image back = f_vjp(p, bank, opA, xs, lambda, h, res.grads);
            axpy(h, back, lambda);
        }
    } else {
        for (int s = S - 1; s >= 0; --s) {
            const Image& xs = traj.states[static_cast<std::size_t>(s)];
            const Image a = f_rhs(xs, c);
            Image y = xs;
            axpy(h, a, y);
            const Image fy = f_rhs(y, c);

            // response gradient on f(y) is (h/2) lambda
            Image gc = lambda;
            gc *= 0.5 * h;
            const Image gy = f_vjp(p, bank, opA, y, gc, 1.0, res.grads);  // scale folded into gc
            res.grads.dT += 0.5 / S * (dot(lambda, a) + dot(lambda, fy)) + dot(gy, a) / S;

            // response gradient on f(x_s): (h/2) lambda + h gy
            Image ga = lambda;
            ga *= 0.5 * h;
            axpy(h, gy, ga);
            const Image v = f_vjp(p, bank, opA, xs, ga, 1.0, res.grads);
            lambda += gy;
            lambda += v;
        }
    }
    return res;
}

struct BatchEval {
    double loss = std::numeric_limits<double>::infinity();
    int used = 0;
    std::vector<std::size_t> diverged;
    ParamGradients grads;
};

// Mean loss (and optionally gradients) across the batch items listed in
// `active` (all items when empty). Items evaluate in parallel; the reduction
// runs in item order so results are reproducible.
inline BatchEval batch_eval(const FlowParams& p, const DataOperator& opA,
                            std::span<const TrainSample> batch, int S, Scheme scheme,
                            bool want_grads, std::span<const std::size_t> active = {}) {
    const KernelBank bank = make_bank(p);
    std::vector<std::size_t> items;
    if (active.empty()) {
        items.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) items[i] = i;
    } else {
        items.assign(active.begin(), active.end());
    }

    std::vector<ItemResult> results(items.size());
    parallel_for(items.size(), [&](std::size_t i) {
        results[i] = item_loss_grad(p, bank, opA, batch[items[i]], S, scheme, want_grads);
    });

    BatchEval ev;
    ev.grads = ParamGradients::zeros_like(p);
    double loss = 0.0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].diverged) {
            ev.diverged.push_back(items[i]);
            continue;
        }
        loss += results[i].loss;
        if (want_grads) ev.grads.add(results[i].grads);
        ++ev.used;
    }
    if (ev.used > 0) {
        ev.loss = loss / ev.used;
        if (want_grads) ev.grads.scale(1.0 / ev.used);
    }
    return ev;
}

}  // namespace detail

// Mean terminal squared error (1/|B|) sum_i (1/2)||x_S^i - x_g^i||^2.
// Throws BatchDivergedError on the first diverging item.
inline double loss_batch(const FlowParams& p, const DataOperator& opA,
                         std::span<const TrainSample> batch, int S, Scheme scheme = Scheme::Euler) {
    const KernelBank bank = make_bank(p);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = detail::item_loss_grad(p, bank, opA, batch[i], S, scheme, false);
        if (r.diverged) throw BatchDivergedError(i, r.diverged_step);
        loss += r.loss;
    }
    return loss / static_cast<double>(batch.size());
}

// Exact gradients of the discrete batch loss with respect to (T, kernels,
// weights) by reverse-mode differentiation through the scheme.
inline ParamGradients param_gradients(const FlowParams& p, const DataOperator& opA,
                                      std::span<const TrainSample> batch, int S,
                                      Scheme scheme = Scheme::Euler) {
    const auto ev = detail::batch_eval(p, opA, batch, S, scheme, true);
    if (!ev.diverged.empty()) throw BatchDivergedError(ev.diverged.front(), 0);
    return ev.grads;
}

struct TrainConfig {
    int n_kernels = 48;
    int kernel_size = 7;
    int n_weights = 63;
    int depth = 10;
    Scheme scheme = Scheme::Euler;
    int batch_size = 64;
    int patch = 96;
    int iterations = 5000;
    std::uint64_t seed = 0;
    Task task = Task::Denoise;
    double sigma = 0.1;
    double tau = 1.5;
    double data_weight = 1.0;
    double over_relax = 0.70710678118654752;  // 1/sqrt(2)
    double T_init = 1.0;
    double init_L = 1.0;
    int max_doublings = 60;
};

struct HistoryRow {
    int iteration = 0;
    double loss = 0.0;
    double T = 0.0;
    double L_K = 0.0, L_w = 0.0, L_T = 0.0;
    int skipped = 0;
};

struct TrainResult {
    FlowParams params;
    std::vector<HistoryRow> history;
};

// Self-describing little-endian binary model container; round-trips
// bit-exactly.
struct ModelFile {
    std::uint32_t version = 1;
    Task task = Task::Denoise;
    Scheme scheme = Scheme::Euler;
    std::uint32_t depth = 10;
    double sigma = 0.1;
    double tau = 1.5;
    double data_weight = 1.0;
    FlowParams params;

    void save(const std::string& path) const;
    static ModelFile load(const std::string& path);
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& out, double v) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("model file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("model file truncated");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

}  // namespace detail

inline void ModelFile::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("model save: cannot open " + path);
    out.write("GSTPMDL1", 8);
    detail::put_u32(out, version);
    detail::put_u32(out, task == Task::Denoise ? 0u : 1u);
    detail::put_u32(out, scheme == Scheme::Euler ? 0u : 1u);
    detail::put_u32(out, depth);
    detail::put_f64(out, sigma);
    detail::put_f64(out, tau);
    detail::put_f64(out, data_weight);
    detail::put_f64(out, params.T);
    detail::put_u32(out, static_cast<std::uint32_t>(params.kernels.size()));
    detail::put_u32(out, params.kernels.empty() ? 0u : static_cast<std::uint32_t>(params.kernels[0].size()));
    detail::put_u32(out, params.weights.empty() ? 0u : static_cast<std::uint32_t>(params.weights[0].size()));
    for (const Filter& f : params.kernels)
        for (std::size_t i = 0; i < f.tap_count(); ++i) detail::put_f64(out, f[i]);
    for (const auto& w : params.weights)
        for (double v : w) detail::put_f64(out, v);
    if (!out) throw std::runtime_error("model save: write failed for " + path);
}

inline ModelFile ModelFile::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("model load: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "GSTPMDL1", 8) != 0)
        throw std::runtime_error("model load: bad magic in " + path);
    ModelFile m;
    m.version = detail::get_u32(in);
    if (m.version != 1) throw std::runtime_error("model load: unsupported version");
    m.task = detail::get_u32(in) == 0 ? Task::Denoise : Task::Deblur;
    m.scheme = detail::get_u32(in) == 0 ? Scheme::Euler : Scheme::Heun;
    m.depth = detail::get_u32(in);
    m.sigma = detail::get_f64(in);
    m.tau = detail::get_f64(in);
    m.data_weight = detail::get_f64(in);
    m.params.T = detail::get_f64(in);
    const std::uint32_t nk = detail::get_u32(in);
    const std::uint32_t ks = detail::get_u32(in);
    const std::uint32_t nw = detail::get_u32(in);
    for (std::uint32_t k = 0; k < nk; ++k) {
        Filter f(static_cast<int>(ks));
        for (std::size_t i = 0; i < f.tap_count(); ++i) f[i] = detail::get_f64(in);
        m.params.kernels.push_back(std::move(f));
    }
    for (std::uint32_t k = 0; k < nk; ++k) {
        std::vector<double> w(nw);
        for (double& v : w) v = detail::get_f64(in);
        m.params.weights.push_back(std::move(w));
    }
    return m;
}

namespace detail {

// One iPALM block update with backtracked step size. apply_step writes the
// projected candidate for step 1/L into the trial parameter set; the caller's
// step_dot/step_sq report <grad, q+ - q~> and ||q+ - q~||^2 for the proximal
// sufficient-decrease test. Returns the accepted candidate loss.
template <typename ApplyStep, typename StepDot, typename StepSq, typename EvalLoss>
double backtrack_block(double& L, double loss_tilde, int max_doublings, ApplyStep&& apply_step,
                       StepDot&& step_dot, StepSq&& step_sq, EvalLoss&& eval_loss) {
    for (int tries = 0; tries <= max_doublings; ++tries) {
        apply_step(1.0 / L);
        const double candidate = eval_loss();
        const double bound = loss_tilde + step_dot() + 0.5 * L * step_sq();
        if (candidate <= bound) {
            L *= 0.5;  // relax once per accepted step
            return candidate;
        }
        L *= 2.0;
    }
    throw std::runtime_error("ipalm: backtracking exceeded the doubling budget");
}

}  // namespace detail

// Algorithm: stochastic iPALM over the blocks (all kernels), (all weights),
// T, in that order, each gradient evaluated at the over-relaxed block with
// the freshly updated other blocks. Items that diverge at the extrapolated
// point are skipped for the iteration (a warning is logged); candidate
// points that diverge count as infinite loss and shrink the step.
inline TrainResult ipalm_train(const TrainConfig& cfg, const Dataset& ds, std::ostream* log = nullptr) {
    if (cfg.batch_size < 1) throw std::invalid_argument("ipalm_train: batch_size must be >= 1");
    if (ds.clean.empty()) throw std::invalid_argument("ipalm_train: empty dataset");

    const DataOperator opA = (ds.task == Task::Deblur)
                                 ? DataOperator::gaussian_blur(ds.tau, cfg.data_weight)
                                 : DataOperator::identity(cfg.data_weight);

    FlowParams cur;
    cur.T = cfg.T_init;
    cur.kernels = init_kernels(cfg.n_kernels, cfg.kernel_size, cfg.seed);
    for (int k = 0; k < cfg.n_kernels; ++k)
        cur.weights.push_back(ActivationSpline::init_linear(0.1, cfg.n_weights).weights());
    FlowParams prev = cur;

    double L_K = cfg.init_L, L_w = cfg.init_L, L_T = cfg.init_L;
    Rng rng(cfg.seed + 0x9E3779B97F4A7C15ull);

    TrainResult result;
    result.history.reserve(static_cast<std::size_t>(cfg.iterations));

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        const auto batch = ds.sample_batch(rng, cfg.batch_size, cfg.patch);
        const double beta = cfg.over_relax;
        int skipped = 0;

        // Active items for this iteration: drop what diverges at the first
        // extrapolated point; a fully diverged batch aborts.
        auto eval_at = [&](const FlowParams& p, bool want_grads,
                           std::span<const std::size_t> active) {
            return detail::batch_eval(p, opA, batch, cfg.depth, cfg.scheme, want_grads, active);
        };

        // ---- kernel block ----
        FlowParams tilde = cur;
        for (int k = 0; k < cfg.n_kernels; ++k)
            for (std::size_t i = 0; i < tilde.kernels[static_cast<std::size_t>(k)].tap_count(); ++i) {
                auto& kt = tilde.kernels[static_cast<std::size_t>(k)][i];
                kt = kt + beta * (kt - prev.kernels[static_cast<std::size_t>(k)][i]);
            }
        std::vector<std::size_t> active(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) active[i] = i;
        auto narrow_active = [&](const detail::BatchEval& ev) {
            if (ev.used == 0) throw std::runtime_error("ipalm: every batch item diverged");
            for (std::size_t item : ev.diverged)
                active.erase(std::remove(active.begin(), active.end(), item), active.end());
            skipped = static_cast<int>(batch.size() - active.size());
        };

        detail::BatchEval evK = eval_at(tilde, true, active);
        narrow_active(evK);
        if (skipped > 0 && log)
            (*log) << "iter " << iter << ": skipped " << skipped << " diverged batch item(s)\n";

        FlowParams trialK = cur;  // kernels replaced per candidate
        detail::backtrack_block(
            L_K, evK.loss, cfg.max_doublings,
            [&](double step) {
                for (int k = 0; k < cfg.n_kernels; ++k) {
                    Filter f = tilde.kernels[static_cast<std::size_t>(k)];
                    const Filter& g = evK.grads.dkernels[static_cast<std::size_t>(k)];
                    for (std::size_t i = 0; i < f.tap_count(); ++i) f[i] -= step * g[i];
                    proj_kernel(f);
                    trialK.kernels[static_cast<std::size_t>(k)] = std::move(f);
                }
            },
            [&] {
                double s = 0.0;
                for (int k = 0; k < cfg.n_kernels; ++k)
                    for (std::size_t i = 0; i < trialK.kernels[static_cast<std::size_t>(k)].tap_count(); ++i)
                        s += evK.grads.dkernels[static_cast<std::size_t>(k)][i] *
                             (trialK.kernels[static_cast<std::size_t>(k)][i] - tilde.kernels[static_cast<std::size_t>(k)][i]);
                return s;
            },
            [&] {
                double s = 0.0;
                for (int k = 0; k < cfg.n_kernels; ++k)
                    for (std::size_t i = 0; i < trialK.kernels[static_cast<std::size_t>(k)].tap_count(); ++i) {
                        const double d = trialK.kernels[static_cast<std::size_t>(k)][i] -
                                         tilde.kernels[static_cast<std::size_t>(k)][i];
                        s += d * d;
                    }
                return s;
            },
            [&] { return eval_at(trialK, false, active).loss; });
        prev.kernels = std::move(cur.kernels);
        cur.kernels = trialK.kernels;

        // ---- weight block ----
        tilde = cur;
        for (int k = 0; k < cfg.n_kernels; ++k)
            for (std::size_t i = 0; i < tilde.weights[static_cast<std::size_t>(k)].size(); ++i) {
                auto& wt = tilde.weights[static_cast<std::size_t>(k)][i];
                wt = wt + beta * (wt - prev.weights[static_cast<std::size_t>(k)][i]);
            }
        detail::BatchEval evW = eval_at(tilde, true, active);
        narrow_active(evW);
        FlowParams trialW = cur;
        detail::backtrack_block(
            L_w, evW.loss, cfg.max_doublings,
            [&](double step) {
                for (int k = 0; k < cfg.n_kernels; ++k) {
                    std::vector<double> w = tilde.weights[static_cast<std::size_t>(k)];
                    const auto& g = evW.grads.dweights[static_cast<std::size_t>(k)];
                    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * g[i];
                    proj_weights(w);
                    trialW.weights[static_cast<std::size_t>(k)] = std::move(w);
                }
            },
            [&] {
                double s = 0.0;
                for (int k = 0; k < cfg.n_kernels; ++k)
                    for (std::size_t i = 0; i < trialW.weights[static_cast<std::size_t>(k)].size(); ++i)
                        s += evW.grads.dweights[static_cast<std::size_t>(k)][i] *
                             (trialW.weights[static_cast<std::size_t>(k)][i] - tilde.weights[static_cast<std::size_t>(k)][i]);
                return s;
            },
            [&] {
                double s = 0.0;
                for (int k = 0; k < cfg.n_kernels; ++k)
                    for (std::size_t i = 0; i < trialW.weights[static_cast<std::size_t>(k)].size(); ++i) {
                        const double d = trialW.weights[static_cast<std::size_t>(k)][i] -
                                         tilde.weights[static_cast<std::size_t>(k)][i];
                        s += d * d;
                    }
                return s;
            },
            [&] { return eval_at(trialW, false, active).loss; });
        prev.weights = std::move(cur.weights);
        cur.weights = trialW.weights;

        // ---- stopping-time block ----
        tilde = cur;
        tilde.T = cur.T + beta * (cur.T - prev.T);
        detail::BatchEval evT = eval_at(tilde, true, active);
        narrow_active(evT);
        FlowParams trialT = cur;
        const double accepted = detail::backtrack_block(
            L_T, evT.loss, cfg.max_doublings,
            [&](double step) { trialT.T = proj_T(tilde.T - step * evT.grads.dT); },
            [&] { return evT.grads.dT * (trialT.T - tilde.T); },
            [&] {
                const double d = trialT.T - tilde.T;
                return d * d;
            },
            [&] { return eval_at(trialT, false, active).loss; });
        prev.T = cur.T;
        cur.T = trialT.T;

        result.history.push_back(HistoryRow{iter, accepted, cur.T, L_K, L_w, L_T, skipped});
        if (log && (iter % 50 == 0 || iter == 1))
            (*log) << "iter " << iter << ": loss " << accepted << " T " << cur.T << "\n";
    }

    result.params = std::move(cur);
    return result;
}

}  // namespace gradstop
