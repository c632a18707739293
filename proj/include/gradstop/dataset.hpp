#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradstop/dataops.hpp"
#include "gradstop/image.hpp"
#include "gradstop/pgm.hpp"
#include "gradstop/rng.hpp"

namespace gradstop {

enum class Task { Denoise, Deblur };

// One training pair: degraded input and clean target.
struct TrainSample {
    Image x0;
    Image xg;
};

// Synthetic stand-in for natural images: a smooth ramp, piecewise-constant
// rectangles and disks, and a sinusoidal texture patch.
inline Image synthetic_image(int width, int height, Rng& rng) {
    Image img(width, height);
    const double base = rng.uniform(0.25, 0.65);
    const double gx = rng.uniform(-0.25, 0.25);
    const double gy = rng.uniform(-0.25, 0.25);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            img.px(x, y) = base + gx * (static_cast<double>(x) / width) + gy * (static_cast<double>(y) / height);

    const int n_rects = rng.uniform_int(2, 4);
    for (int r = 0; r < n_rects; ++r) {
        const int x0 = rng.uniform_int(0, width - 2);
        const int y0 = rng.uniform_int(0, height - 2);
        const int x1 = std::min(width - 1, x0 + rng.uniform_int(width / 8, width / 2));
        const int y1 = std::min(height - 1, y0 + rng.uniform_int(height / 8, height / 2));
        const double v = rng.uniform(0.05, 0.95);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) img.px(x, y) = v;
    }

    const int n_disks = rng.uniform_int(1, 3);
    for (int d = 0; d < n_disks; ++d) {
        const int cx = rng.uniform_int(0, width - 1);
        const int cy = rng.uniform_int(0, height - 1);
        const int rad = rng.uniform_int(std::max(2, width / 16), std::max(3, width / 5));
        const double v = rng.uniform(0.05, 0.95);
        for (int y = std::max(0, cy - rad); y <= std::min(height - 1, cy + rad); ++y)
            for (int x = std::max(0, cx - rad); x <= std::min(width - 1, cx + rad); ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad) img.px(x, y) = v;
    }

    // texture: low-amplitude sinusoid in a random subwindow
    const int tx0 = rng.uniform_int(0, width / 2);
    const int ty0 = rng.uniform_int(0, height / 2);
    const int tx1 = std::min(width - 1, tx0 + rng.uniform_int(width / 4, width / 2));
    const int ty1 = std::min(height - 1, ty0 + rng.uniform_int(height / 4, height / 2));
    const double fx = rng.uniform(0.05, 0.35);
    const double fy = rng.uniform(0.05, 0.35);
    const double ph = rng.uniform(0.0, 6.283185307179586);
    const double amp = rng.uniform(0.03, 0.1);
    for (int y = ty0; y <= ty1; ++y)
        for (int x = tx0; x <= tx1; ++x)
            img.px(x, y) += amp * std::sin(6.283185307179586 * (fx * x + fy * y) + ph);

    for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::clamp(img[i], 0.0, 1.0);
    return img;
}

// Clean images plus the degradation recipe. Patches are sampled uniformly;
// with a fixed seed the patch/noise sequence is reproducible.
struct Dataset {
    std::vector<Image> clean;
    Task task = Task::Denoise;
    double sigma = 0.1;
    double tau = 1.5;
    Filter blur;  // built for deblur

    TrainSample degrade_patch(const Image& patch, Rng& rng) const {
        TrainSample s;
        s.xg = patch;
        Image corrupted = (task == Task::Deblur) ? conv2d(patch, blur) : patch;
        if (sigma > 0.0)
            for (std::size_t i = 0; i < corrupted.size(); ++i) corrupted[i] += sigma * rng.normal();
        s.x0 = std::move(corrupted);
        return s;
    }

    Image sample_patch(Rng& rng, int patch) const {
        const Image& src = clean[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(clean.size()) - 1))];
        if (src.width() < patch || src.height() < patch)
            throw std::invalid_argument("dataset: patch larger than source image");
        const int x0 = rng.uniform_int(0, src.width() - patch);
        const int y0 = rng.uniform_int(0, src.height() - patch);
        Image out(patch, patch);
        for (int y = 0; y < patch; ++y)
            for (int x = 0; x < patch; ++x) out.px(x, y) = src.px(x0 + x, y0 + y);
        return out;
    }

    std::vector<TrainSample> sample_batch(Rng& rng, int batch_size, int patch) const {
        std::vector<TrainSample> batch;
        batch.reserve(static_cast<std::size_t>(batch_size));
        for (int i = 0; i < batch_size; ++i) batch.push_back(degrade_patch(sample_patch(rng, patch), rng));
        return batch;
    }
};

// source = "synthetic" or a directory of PGM files
inline Dataset make_dataset(const std::string& source, Task task, double sigma, double tau,
                            std::uint64_t seed, int synthetic_count = 12, int synthetic_size = 160) {
    Dataset ds;
    ds.task = task;
    ds.sigma = sigma;
    ds.tau = tau;
    if (task == Task::Deblur) ds.blur = blur_filter(tau);

    if (source == "synthetic") {
        Rng rng(seed);
        for (int i = 0; i < synthetic_count; ++i)
            ds.clean.push_back(synthetic_image(synthetic_size, synthetic_size, rng));
        return ds;
    }

    std::vector<std::filesystem::path> paths;
    if (!std::filesystem::is_directory(source))
        throw std::runtime_error("dataset: not a directory: " + source);
    for (const auto& entry : std::filesystem::directory_iterator(source))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) ds.clean.push_back(load_pgm(p.string()));
    if (ds.clean.empty()) throw std::runtime_error("dataset: no PGM files in " + source);
    return ds;
}

}  // namespace gradstop
