// gradstop: early-stopped gradient flows for image restoration.
//
// Subcommands: toy2d, train, restore, sweep, spectra, tvl2. Every run is
// fully determined by its flags (or key=value config file) and input files;
// reruns produce byte-identical outputs. All numeric CSV columns use 17
// significant digits.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "gradstop/gradstop.hpp"

namespace gs = gradstop;

namespace {

gs::Task parse_task(const std::string& name) {
    if (name == "denoise") return gs::Task::Denoise;
    if (name == "deblur") return gs::Task::Deblur;
    throw CLI::ValidationError("--task must be denoise or deblur");
}

gs::Scheme parse_scheme(const std::string& name) {
    if (name == "euler") return gs::Scheme::Euler;
    if (name == "heun") return gs::Scheme::Heun;
    throw CLI::ValidationError("--scheme must be euler or heun");
}

gs::DataOperator model_operator(const gs::ModelFile& m) {
    return m.task == gs::Task::Deblur ? gs::DataOperator::gaussian_blur(m.tau, m.data_weight)
                                      : gs::DataOperator::identity(m.data_weight);
}

// depth for a requested stopping time under the model's S/T ratio
int scaled_depth(const gs::ModelFile& m, double T) {
    if (T <= 0.0 || m.params.T <= 0.0) return 1;
    const double ratio = static_cast<double>(m.depth) / m.params.T;
    return std::max(2, static_cast<int>(std::lround(ratio * T)));
}

std::vector<gs::Image> load_image_set(const std::string& source, int count, int size, std::uint64_t seed) {
    std::vector<gs::Image> images;
    if (source == "synthetic") {
        gs::Rng rng(seed);
        for (int i = 0; i < count; ++i) images.push_back(gs::synthetic_image(size, size, rng));
        return images;
    }
    std::vector<std::filesystem::path> paths;
    if (!std::filesystem::is_directory(source))
        throw std::runtime_error("image set: not a directory: " + source);
    for (const auto& entry : std::filesystem::directory_iterator(source))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        images.push_back(gs::load_pgm(p.string()));
        if (count > 0 && static_cast<int>(images.size()) == count) break;
    }
    if (images.empty()) throw std::runtime_error("image set: no PGM files in " + source);
    return images;
}

int cmd_toy2d(const std::string& out_dir, int depth, int quad) {
    const gs::ToyReport rep = gs::run_toy2d(depth, quad);
    gs::write_toy_report(rep, out_dir);
    std::printf("T_opt %s\n", gs::csv17(rep.T_opt).c_str());
    std::printf("J_opt %s\n", gs::csv17(rep.curve.energies[rep.argmin_index]).c_str());
    std::printf("foc_crossing_T %s\n", gs::csv17(rep.foc_crossing.value_or(-1.0)).c_str());
    std::printf("second_order_value %s\n", gs::csv17(rep.second_order.value).c_str());
    return 0;
}

struct TrainArgs {
    std::string task = "denoise";
    double sigma = 0.1;
    double tau = 1.5;
    double weight = 1.0;
    int nk = 48;
    int depth = 10;
    int iters = 5000;
    int batch = 64;
    int patch = 96;
    int nw = 63;
    std::string scheme = "euler";
    double t_init = 1.0;
    std::uint64_t seed = 0;
    std::string data = "synthetic";
    std::string out = "model.bin";
    std::string history = "history.csv";
};

int cmd_train(const TrainArgs& a) {
    gs::TrainConfig cfg;
    cfg.task = parse_task(a.task);
    cfg.scheme = parse_scheme(a.scheme);
    cfg.sigma = a.sigma;
    cfg.tau = a.tau;
    cfg.data_weight = a.weight;
    cfg.n_kernels = a.nk;
    cfg.n_weights = a.nw;
    cfg.depth = a.depth;
    cfg.iterations = a.iters;
    cfg.batch_size = a.batch;
    cfg.patch = a.patch;
    cfg.T_init = a.t_init;
    cfg.seed = a.seed;

    const gs::Dataset ds = gs::make_dataset(a.data, cfg.task, cfg.sigma, cfg.tau, cfg.seed);
    const gs::TrainResult result = gs::ipalm_train(cfg, ds, &std::cerr);

    gs::ModelFile model;
    model.task = cfg.task;
    model.scheme = cfg.scheme;
    model.depth = static_cast<std::uint32_t>(cfg.depth);
    model.sigma = cfg.sigma;
    model.tau = cfg.tau;
    model.data_weight = cfg.data_weight;
    model.params = result.params;
    model.save(a.out);

    gs::CsvWriter history(a.history, "iteration,loss,T,L_K,L_w,L_T,skipped");
    for (const auto& row : result.history)
        history.row(row.iteration, gs::csv17(row.loss), gs::csv17(row.T), gs::csv17(row.L_K),
                    gs::csv17(row.L_w), gs::csv17(row.L_T), row.skipped);

    std::printf("final_loss %s\n", gs::csv17(result.history.back().loss).c_str());
    std::printf("T %s\n", gs::csv17(result.params.T).c_str());
    return 0;
}

int cmd_restore(const std::string& model_path, const std::string& input_path,
                const std::string& out_path, double T_override, const std::string& truth_path,
                int depth_out) {
    const gs::ModelFile model = gs::ModelFile::load(model_path);
    const gs::Image input = gs::load_pgm(input_path);

    const double T = (T_override >= 0.0) ? T_override : model.params.T;
    gs::ControlSet c;
    c.T = T;
    c.bank = gs::make_bank(model.params);
    c.opA = model_operator(model);
    c.b = input;
    c.x0 = input;

    gs::Image out = input;
    if (T > 0.0) {
        const int S = scaled_depth(model, T);
        const gs::Trajectory traj = (model.scheme == gs::Scheme::Euler) ? gs::forward_euler(c, S)
                                                                        : gs::forward_heun(c, S);
        out = traj.terminal();
    }
    gs::save_pgm(out, out_path, depth_out);

    if (!truth_path.empty()) {
        const gs::Image truth = gs::load_pgm(truth_path);
        std::printf("psnr_in %s\n", gs::csv17(gs::psnr(input, truth)).c_str());
        std::printf("psnr_out %s\n", gs::csv17(gs::psnr(out, truth)).c_str());
    }
    std::printf("T %s\n", gs::csv17(T).c_str());
    return 0;
}

int cmd_sweep(const std::string& model_path, const std::string& data, int count, int size,
              std::uint64_t seed, double tmin, double tmax, double tstep,
              const std::string& out_csv, const std::string& crossings_csv) {
    const gs::ModelFile model = gs::ModelFile::load(model_path);
    const gs::KernelBank bank = gs::make_bank(model.params);
    const gs::DataOperator opA = model_operator(model);

    std::vector<double> grid;
    for (double T = tmin; T <= tmax + 1e-12; T += tstep) grid.push_back(T);
    const gs::DepthRule rule =
        gs::DepthRule::ratio(model.params.T > 0 ? model.depth / model.params.T : model.depth);

    const std::vector<gs::Image> clean = load_image_set(data, count, size, seed);
    gs::Rng rng(seed + 1);
    gs::Dataset degrader;
    degrader.task = model.task;
    degrader.sigma = model.sigma;
    degrader.tau = model.tau;
    if (model.task == gs::Task::Deblur) degrader.blur = gs::blur_filter(model.tau);

    gs::CsvWriter csv(out_csv, "T,image,J,foc");
    gs::CsvWriter crossings(crossings_csv, "image,T_cross,T_argmin");
    std::vector<double> mean_J(grid.size(), 0.0), mean_foc(grid.size(), 0.0);

    for (std::size_t i = 0; i < clean.size(); ++i) {
        const gs::TrainSample sample = degrader.degrade_patch(clean[i], rng);
        gs::ControlSet base;
        base.bank = bank;
        base.opA = opA;
        base.b = sample.x0;
        base.x0 = sample.x0;
        const gs::StoppingCurve curve = gs::sweep_T(base, grid, rule, sample.xg, model.scheme);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            csv.row(gs::csv17(grid[g]), i, gs::csv17(curve.energies[g]), gs::csv17(curve.foc[g]));
            mean_J[g] += curve.energies[g];
            mean_foc[g] += curve.foc[g];
        }
        const auto cross = gs::foc_zero_crossing(curve);
        crossings.row(i, gs::csv17(cross.value_or(-1.0)), gs::csv17(grid[gs::argmin_energy(curve)]));
    }

    gs::StoppingCurve mean_curve;
    mean_curve.T_values = grid;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        mean_curve.energies.push_back(mean_J[g] / static_cast<double>(clean.size()));
        mean_curve.foc.push_back(mean_foc[g] / static_cast<double>(clean.size()));
        csv.row(gs::csv17(grid[g]), "mean", gs::csv17(mean_curve.energies[g]), gs::csv17(mean_curve.foc[g]));
    }
    const auto mean_cross = gs::foc_zero_crossing(mean_curve);
    crossings.row("mean", gs::csv17(mean_cross.value_or(-1.0)),
                  gs::csv17(grid[gs::argmin_energy(mean_curve)]));
    std::printf("mean_T_cross %s\n", gs::csv17(mean_cross.value_or(-1.0)).c_str());
    return 0;
}

int cmd_spectra(const std::string& model_path, int count, int size, int iters, std::uint64_t seed,
                const std::string& out_dir, const std::string& data, double stop_residual) {
    const gs::ModelFile model = gs::ModelFile::load(model_path);
    const gs::KernelBank bank = gs::make_bank(model.params);

    gs::SpectralConfig cfg;
    cfg.count = count;
    cfg.size = size;
    cfg.iters = iters;
    cfg.seed = seed;
    cfg.stop_residual = stop_residual;

    const std::vector<gs::Image> source = load_image_set(data, 8, std::max(size, 160), seed);
    const std::vector<gs::EigenPair> pairs = gs::solve_eigenpairs(bank, cfg, source);

    std::filesystem::create_directories(out_dir);
    gs::CsvWriter csv((std::filesystem::path(out_dir) / "spectra.csv").string(),
                      "index,lambda,residual,contrast_factor,converged");
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        const auto& pair = pairs[j];
        csv.row(j, gs::csv17(pair.lambda), gs::csv17(pair.residual),
                gs::csv17(gs::contrast_factor(pair.lambda, model.params.T, static_cast<int>(model.depth))),
                pair.converged ? 1 : 0);
        // normalized eigenfunction rendering
        double lo = pair.v[0], hi = pair.v[0];
        for (std::size_t i = 0; i < pair.v.size(); ++i) {
            lo = std::min(lo, pair.v[i]);
            hi = std::max(hi, pair.v[i]);
        }
        gs::Image render = pair.v;
        if (hi > lo)
            for (std::size_t i = 0; i < render.size(); ++i) render[i] = (render[i] - lo) / (hi - lo);
        else
            for (std::size_t i = 0; i < render.size(); ++i) render[i] = 0.5;
        char name[32];
        std::snprintf(name, sizeof(name), "eig_%03zu.pgm", j);
        gs::save_pgm(render, (std::filesystem::path(out_dir) / name).string(), 16);
    }
    std::printf("pairs %zu\n", pairs.size());
    return 0;
}

int cmd_tvl2(const std::string& truth_path, const std::string& input_path, double sigma,
             std::uint64_t seed, const std::string& nu_list, int max_iters, int every,
             const std::string& out_csv) {
    const gs::Image truth = gs::load_pgm(truth_path);
    const gs::Image noisy = input_path.empty() ? gs::add_gaussian_noise(truth, sigma, seed)
                                               : gs::load_pgm(input_path);

    std::vector<double> nu_grid;
    {
        std::string item;
        for (char ch : nu_list + ",") {
            if (ch == ',') {
                if (!item.empty()) nu_grid.push_back(std::stod(item));
                item.clear();
            } else {
                item.push_back(ch);
            }
        }
    }
    std::vector<int> iter_grid;
    for (int k = every; k <= max_iters; k += every) iter_grid.push_back(k);

    gs::TvConfig cfg;
    cfg.max_iters = max_iters;
    const auto rows = gs::tv_sweep(noisy, truth, nu_grid, iter_grid, cfg);

    gs::CsvWriter csv(out_csv, "iters,nu,psnr");
    for (const auto& row : rows) csv.row(row.iters, gs::csv17(row.nu), gs::csv17(row.psnr));
    std::printf("rows %zu\n", rows.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"early-stopped gradient flows for image restoration"};
    app.require_subcommand(1);

    // toy2d
    auto* toy = app.add_subcommand("toy2d", "R^2 optimal-stopping scenario, writes CSV curves");
    std::string toy_out = ".";
    int toy_depth = 100, toy_quad = 21;
    toy->add_option("--out", toy_out, "output directory");
    toy->add_option("--depth", toy_depth, "Euler steps per trajectory");
    toy->add_option("--quad", toy_quad, "Gauss-Legendre point count");
    toy->set_config("--config");

    // train
    auto* train = app.add_subcommand("train", "iPALM training of (T, kernels, activations)");
    TrainArgs ta;
    train->add_option("--task", ta.task, "denoise or deblur");
    train->add_option("--sigma", ta.sigma, "noise level");
    train->add_option("--tau", ta.tau, "blur strength (deblur)");
    train->add_option("--weight", ta.weight, "data-term weight");
    train->add_option("--nk", ta.nk, "number of kernels");
    train->add_option("--nw", ta.nw, "spline weights per activation");
    train->add_option("--depth", ta.depth, "scheme depth S");
    train->add_option("--iters", ta.iters, "iPALM iterations");
    train->add_option("--batch", ta.batch, "batch size");
    train->add_option("--patch", ta.patch, "patch side length");
    train->add_option("--scheme", ta.scheme, "euler or heun");
    train->add_option("--t-init", ta.t_init, "initial stopping time");
    train->add_option("--seed", ta.seed, "rng seed");
    train->add_option("--data", ta.data, "training directory or 'synthetic'");
    train->add_option("--out", ta.out, "model output path");
    train->add_option("--history", ta.history, "history CSV path");
    train->set_config("--config");

    // restore
    auto* restore = app.add_subcommand("restore", "integrate a corrupted image to the stopping time");
    std::string r_model, r_input, r_out = "restored.pgm", r_truth;
    double r_T = -1.0;
    int r_depth_bits = 16;
    restore->add_option("--model", r_model, "model file")->required();
    restore->add_option("--input", r_input, "corrupted PGM")->required();
    restore->add_option("--out", r_out, "output PGM");
    restore->add_option("--T", r_T, "stopping-time override (default: learned T)");
    restore->add_option("--truth", r_truth, "ground truth PGM for PSNR report");
    restore->add_option("--bits", r_depth_bits, "output depth 8 or 16");
    restore->set_config("--config");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "energy and first-order-condition curves over T");
    std::string s_model, s_data = "synthetic", s_out = "sweep.csv", s_cross = "sweep_crossings.csv";
    int s_count = 4, s_size = 96;
    std::uint64_t s_seed = 0;
    double s_tmin = 0.1, s_tmax = 3.0, s_tstep = 0.1;
    sweep->add_option("--model", s_model, "model file")->required();
    sweep->add_option("--data", s_data, "image directory or 'synthetic'");
    sweep->add_option("--count", s_count, "number of images");
    sweep->add_option("--size", s_size, "synthetic image side");
    sweep->add_option("--seed", s_seed, "degradation seed");
    sweep->add_option("--tmin", s_tmin, "grid start");
    sweep->add_option("--tmax", s_tmax, "grid end");
    sweep->add_option("--tstep", s_tstep, "grid step");
    sweep->add_option("--out", s_out, "curve CSV path");
    sweep->add_option("--crossings", s_cross, "zero-crossing CSV path");
    sweep->set_config("--config");

    // spectra
    auto* spectra = app.add_subcommand("spectra", "generalized eigenpairs of the learned regularizer");
    std::string p_model, p_out = "pairs", p_data = "synthetic";
    int p_count = 64, p_size = 127, p_iters = 10000;
    std::uint64_t p_seed = 0;
    double p_stop = 0.0;
    spectra->add_option("--model", p_model, "model file")->required();
    spectra->add_option("--count", p_count, "number of eigenpairs");
    spectra->add_option("--size", p_size, "eigenfunction side length");
    spectra->add_option("--iters", p_iters, "max minimization iterations");
    spectra->add_option("--seed", p_seed, "rng seed");
    spectra->add_option("--out", p_out, "output directory");
    spectra->add_option("--data", p_data, "patch source directory or 'synthetic'");
    spectra->add_option("--stop-residual", p_stop, "early-stop residual (0 disables)");
    spectra->set_config("--config");

    // tvl2
    auto* tvl2 = app.add_subcommand("tvl2", "TV-L2 gradient-descent PSNR sweep");
    std::string t_truth, t_input, t_nus = "0.01,0.02,0.0474,0.08,0.15", t_out = "tvl2.csv";
    double t_sigma = 0.1;
    std::uint64_t t_seed = 0;
    int t_iters = 300, t_every = 1;
    tvl2->add_option("--truth", t_truth, "clean PGM")->required();
    tvl2->add_option("--input", t_input, "noisy PGM (default: add noise to truth)");
    tvl2->add_option("--sigma", t_sigma, "noise level when degrading");
    tvl2->add_option("--seed", t_seed, "noise seed");
    tvl2->add_option("--nus", t_nus, "comma-separated regularization weights");
    tvl2->add_option("--iters", t_iters, "max iterations");
    tvl2->add_option("--every", t_every, "record PSNR every k iterations");
    tvl2->add_option("--out", t_out, "CSV path");
    tvl2->set_config("--config");

    CLI11_PARSE(app, argc, argv);

    try {
        if (toy->parsed()) return cmd_toy2d(toy_out, toy_depth, toy_quad);
        if (train->parsed()) return cmd_train(ta);
        if (restore->parsed()) return cmd_restore(r_model, r_input, r_out, r_T, r_truth, r_depth_bits);
        if (sweep->parsed())
            return cmd_sweep(s_model, s_data, s_count, s_size, s_seed, s_tmin, s_tmax, s_tstep, s_out, s_cross);
        if (spectra->parsed())
            return cmd_spectra(p_model, p_count, p_size, p_iters, p_seed, p_out, p_data, p_stop);
        if (tvl2->parsed())
            return cmd_tvl2(t_truth, t_input, t_sigma, t_seed, t_nus, t_iters, t_every, t_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
