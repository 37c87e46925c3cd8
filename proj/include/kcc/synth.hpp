#pragma once

// Procedural token-grid datasets for desk-scale testing. Each class owns a unit
// feature direction painted onto an elliptical foreground blob; background
// tokens share one further direction; every token gets isotropic Gaussian noise.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "kcc/container.hpp"
#include "kcc/error.hpp"

namespace kcc {

struct SynthSpec {
    std::size_t classes = 3;
    std::size_t per_class = 20;
    std::size_t grid = 16;
    std::size_t dim = 16;
    double noise = 0.0;         // per-component standard deviation
    std::uint64_t seed = 0;     // image sampling (blobs, noise)
    std::uint64_t world_seed = 0;  // class and background directions
    std::size_t patch_size = 14;
    bool with_cls = false;
    std::string prefix = "img";
};

/// Orthonormal directions: classes first, background last.
inline std::vector<std::vector<double>> synth_directions(std::size_t classes, std::size_t dim, std::uint64_t world_seed) {
    if (dim < classes + 1) throw ValidationError("synthetic data needs dim >= classes + 1");
    std::mt19937_64 rng(world_seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> dirs;
    while (dirs.size() < classes + 1) {
        std::vector<double> v(dim);
        for (auto& x : v) x = normal(rng);
        for (const auto& u : dirs) {
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) dot += v[d] * u[d];
            for (std::size_t d = 0; d < dim; ++d) v[d] -= dot * u[d];
        }
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n < 1e-6) continue;
        for (auto& x : v) x /= n;
        dirs.push_back(std::move(v));
    }
    return dirs;
}

inline Dataset synthesize(const SynthSpec& spec) {
    if (spec.classes < 1 || spec.per_class < 1) throw ValidationError("synthetic data needs >= 1 class and image");
    if (spec.grid < 2) throw ValidationError("synthetic grid must be at least 2x2");
    if (spec.patch_size < 1) throw ValidationError("patch size must be >= 1");
    if (!(spec.noise >= 0.0)) throw ValidationError("noise must be >= 0");
    const auto dirs = synth_directions(spec.classes, spec.dim, spec.world_seed);
    const auto& background = dirs.back();

    Dataset ds;
    ds.dataset_id = "synth-" + spec.prefix + "-c" + std::to_string(spec.classes) + "-n" +
                    std::to_string(spec.per_class) + "-s" + std::to_string(spec.seed);
    ds.encoder_id = "synthetic";
    for (std::size_t c = 0; c < spec.classes; ++c) ds.class_names.push_back("class_" + std::to_string(c));

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto g = static_cast<double>(spec.grid);
    const std::size_t px = spec.grid * spec.patch_size;

    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            char id[128];
            std::snprintf(id, sizeof id, "%s_c%zu_%03zu", spec.prefix.c_str(), c, i);
            const double cy = g * (0.35 + 0.3 * uniform(rng));
            const double cx = g * (0.35 + 0.3 * uniform(rng));
            const double ry = g * (0.2 + 0.15 * uniform(rng));
            const double rx = g * (0.2 + 0.15 * uniform(rng));
            const auto inside = [&](double y, double x) {
                const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                return dy * dy + dx * dx <= 1.0;
            };

            TokenGrid grid;
            grid.image_id = id;
            grid.grid_h = grid.grid_w = spec.grid;
            grid.dim = spec.dim;
            grid.orig_h = grid.orig_w = px;
            grid.patch_size = spec.patch_size;
            grid.tokens.resize(spec.grid * spec.grid * spec.dim);
            std::vector<double> fg_sum(spec.dim, 0.0);
            std::size_t fg_count = 0;
            for (std::size_t r = 0; r < spec.grid; ++r)
                for (std::size_t q = 0; q < spec.grid; ++q) {
                    const bool fg = inside(static_cast<double>(r) + 0.5, static_cast<double>(q) + 0.5);
                    const auto& base = fg ? dirs[c] : background;
                    float* t = grid.tokens.data() + (r * spec.grid + q) * spec.dim;
                    for (std::size_t d = 0; d < spec.dim; ++d) {
                        t[d] = static_cast<float>(base[d] + spec.noise * normal(rng));
                        if (fg) fg_sum[d] += t[d];
                    }
                    fg_count += fg ? 1 : 0;
                }
            if (spec.with_cls) {
                std::vector<float> cls(spec.dim);
                for (std::size_t d = 0; d < spec.dim; ++d)
                    cls[d] = static_cast<float>(fg_count > 0 ? fg_sum[d] / static_cast<double>(fg_count) : dirs[c][d]);
                grid.cls_vector = std::move(cls);
            }

            ForegroundMask mask;
            mask.image_id = id;
            mask.height = mask.width = px;
            mask.values.resize(px * px);
            const auto p = static_cast<double>(spec.patch_size);
            for (std::size_t y = 0; y < px; ++y)
                for (std::size_t x = 0; x < px; ++x)
                    mask.values[y * px + x] =
                        inside((static_cast<double>(y) + 0.5) / p, (static_cast<double>(x) + 0.5) / p) ? 1 : 0;

            ds.image_classes[id] = static_cast<int>(c);
            ds.grids.push_back(std::move(grid));
            ds.masks.push_back(std::move(mask));
        }
    }
    ds.validate();
    return ds;
}

}  // namespace kcc
