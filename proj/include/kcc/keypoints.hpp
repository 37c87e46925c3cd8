#pragma once

// Foreground-restricted keypoint extraction: resample tokens and mask to a
// working resolution, split the foreground with SLIC over token features, and
// summarize each segment by its mean token and its center.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kcc/container.hpp"
#include "kcc/error.hpp"
#include "kcc/parallel.hpp"

namespace kcc {

/// Tokens and mask co-registered at the working resolution.
struct WorkingGrid {
    std::size_t work_h = 0;
    std::size_t work_w = 0;
    std::size_t dim = 0;
    std::vector<float> features;  // work_h * work_w * dim
    std::vector<std::uint8_t> mask;  // work_h * work_w

    std::size_t size() const noexcept { return work_h * work_w; }

    std::span<const float> feature(std::size_t pixel) const {
        return {features.data() + pixel * dim, dim};
    }

    std::size_t foreground_count() const {
        return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
    }
};

/// Foreground partition. Label 0 is background, 1..n_actual are segments.
struct SegmentMap {
    std::size_t work_h = 0;
    std::size_t work_w = 0;
    std::vector<int> labels;
    int n_actual = 0;
    int requested = 0;

    friend bool operator==(const SegmentMap&, const SegmentMap&) = default;
};

struct PixelPoint {
    double row = 0.0;
    double col = 0.0;

    friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

struct Keypoint {
    int segment_id = 0;
    std::vector<float> representation;
    std::size_t pixel_count = 0;
    PixelPoint centroid_work;
    PixelPoint centroid_input;
    std::string image_id;
    std::optional<int> class_label;

    friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct SlicParams {
    int n_segments = 8;
    double compactness = 1.0;
    int max_iters = 10;
    std::uint64_t seed = 0;
    unsigned threads = 1;  // assignment-step parallelism; never changes results
};

inline std::pair<std::size_t, std::size_t> choose_working_resolution(const TokenGrid& grid,
                                                                     std::size_t scale_factor) {
    if (scale_factor == 0) throw ValidationError("scale factor must be >= 1");
    return {std::min(grid.grid_h * scale_factor, grid.orig_h),
            std::min(grid.grid_w * scale_factor, grid.orig_w)};
}

/// Bilinear (align-corners) upsampling of tokens and nearest-neighbour
/// subsampling of the mask, both to work_h x work_w.
inline WorkingGrid resample(const TokenGrid& grid, const ForegroundMask& mask, std::size_t work_h,
                            std::size_t work_w) {
    if (grid.image_id != mask.image_id)
        throw ValidationError("mask '" + mask.image_id + "' does not belong to grid '" + grid.image_id + "'");
    if (mask.height != grid.orig_h || mask.width != grid.orig_w)
        throw ValidationError("mask size differs from image size for '" + grid.image_id + "'");
    if (work_h < grid.grid_h || work_w < grid.grid_w || work_h > grid.orig_h || work_w > grid.orig_w)
        throw ValidationError("working resolution out of bounds for '" + grid.image_id + "'");

    WorkingGrid out;
    out.work_h = work_h;
    out.work_w = work_w;
    out.dim = grid.dim;
    out.features.assign(work_h * work_w * grid.dim, 0.0f);
    out.mask.assign(work_h * work_w, 0);

    // Source coordinate of output index i under the align-corners convention.
    const auto source = [](std::size_t i, std::size_t out_n, std::size_t in_n) {
        if (out_n <= 1 || in_n <= 1) return 0.0;
        return static_cast<double>(i) * static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1);
    };

    for (std::size_t r = 0; r < work_h; ++r) {
        const double sy = source(r, work_h, grid.grid_h);
        const auto y0 = std::min(static_cast<std::size_t>(std::floor(sy)), grid.grid_h - 1);
        const std::size_t y1 = std::min(y0 + 1, grid.grid_h - 1);
        const double wy = sy - static_cast<double>(y0);
        for (std::size_t c = 0; c < work_w; ++c) {
            const double sx = source(c, work_w, grid.grid_w);
            const auto x0 = std::min(static_cast<std::size_t>(std::floor(sx)), grid.grid_w - 1);
            const std::size_t x1 = std::min(x0 + 1, grid.grid_w - 1);
            const double wx = sx - static_cast<double>(x0);
            const auto t00 = grid.token(y0, x0);
            const auto t01 = grid.token(y0, x1);
            const auto t10 = grid.token(y1, x0);
            const auto t11 = grid.token(y1, x1);
            float* dst = out.features.data() + (r * work_w + c) * grid.dim;
            for (std::size_t k = 0; k < grid.dim; ++k) {
                const double top = t00[k] + wx * (static_cast<double>(t01[k]) - t00[k]);
                const double bottom = t10[k] + wx * (static_cast<double>(t11[k]) - t10[k]);
                dst[k] = static_cast<float>(top + wy * (bottom - top));
            }
            // Nearest source pixel to the output pixel center.
            const auto my = std::min(static_cast<std::size_t>((static_cast<double>(r) + 0.5) *
                                                              static_cast<double>(mask.height) /
                                                              static_cast<double>(work_h)),
                                     mask.height - 1);
            const auto mx = std::min(static_cast<std::size_t>((static_cast<double>(c) + 0.5) *
                                                              static_cast<double>(mask.width) /
                                                              static_cast<double>(work_w)),
                                     mask.width - 1);
            out.mask[r * work_w + c] = mask.at(my, mx);
        }
    }
    return out;
}

namespace detail {

struct Component {
    int segment = 0;               // owning segment (index into segment tables)
    std::vector<std::size_t> pixels;
};

/// Labels 4-connected regions of equal positive label. Returns per-pixel
/// component index (-1 on background) and the components in row-major
/// discovery order.
inline std::vector<int> connected_components(const std::vector<int>& labels, std::size_t h, std::size_t w,
                                             std::vector<Component>& comps) {
    std::vector<int> comp_of(labels.size(), -1);
    std::vector<std::size_t> stack;
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (labels[p] < 0 || comp_of[p] >= 0) continue;
        const int id = static_cast<int>(comps.size());
        Component comp;
        comp.segment = labels[p];
        comp_of[p] = id;
        stack.push_back(p);
        while (!stack.empty()) {
            const std::size_t q = stack.back();
            stack.pop_back();
            comp.pixels.push_back(q);
            const std::size_t r = q / w;
            const std::size_t c = q % w;
            const auto visit = [&](std::size_t n) {
                if (comp_of[n] < 0 && labels[n] == labels[p]) {
                    comp_of[n] = id;
                    stack.push_back(n);
                }
            };
            if (r > 0) visit(q - w);
            if (r + 1 < h) visit(q + w);
            if (c > 0) visit(q - 1);
            if (c + 1 < w) visit(q + 1);
        }
        std::sort(comp.pixels.begin(), comp.pixels.end());
        comps.push_back(std::move(comp));
    }
    return comp_of;
}

/// Nearest foreground pixel to (row, col); ties go to the first in row-major order.
inline std::size_t nearest_foreground(const std::vector<std::size_t>& fg, std::size_t w, double row, double col) {
    std::size_t best = fg.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t p : fg) {
        const double dr = static_cast<double>(p / w) - row;
        const double dc = static_cast<double>(p % w) - col;
        const double d = dr * dr + dc * dc;
        if (d < best_d) {
            best_d = d;
            best = p;
        }
    }
    return best;
}

/// Picks `k` of `points` by farthest-point sampling starting at index `start`.
inline std::vector<std::size_t> farthest_points(const std::vector<std::size_t>& points, std::size_t w,
                                                std::size_t k, std::size_t start) {
    std::vector<std::size_t> chosen{points[start]};
    std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
    std::size_t last = points[start];
    while (chosen.size() < k) {
        std::size_t best = 0;
        double best_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double dr = static_cast<double>(points[i] / w) - static_cast<double>(last / w);
            const double dc = static_cast<double>(points[i] % w) - static_cast<double>(last % w);
            dist[i] = std::min(dist[i], dr * dr + dc * dc);
            if (dist[i] > best_d) {
                best_d = dist[i];
                best = i;
            }
        }
        if (best_d <= 0.0) break;
        last = points[best];
        chosen.push_back(last);
    }
    return chosen;
}

/// Grid seeds over the foreground bounding box with alternate rows shifted by
/// a quarter cell, snapped onto the foreground, then trimmed or topped up to
/// exactly k distinct pixels.
inline std::vector<std::size_t> seed_centers(const std::vector<std::size_t>& fg, std::size_t w, std::size_t k,
                                             double interval, std::uint64_t seed) {
    std::size_t r0 = std::numeric_limits<std::size_t>::max(), r1 = 0;
    std::size_t c0 = std::numeric_limits<std::size_t>::max(), c1 = 0;
    for (std::size_t p : fg) {
        r0 = std::min(r0, p / w);
        r1 = std::max(r1, p / w);
        c0 = std::min(c0, p % w);
        c1 = std::max(c1, p % w);
    }
    const double bh = static_cast<double>(r1 - r0 + 1);
    const double bw = static_cast<double>(c1 - c0 + 1);
    const auto n_rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(bh / interval)));
    const auto n_cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(bw / interval)));
    const double cell_h = bh / static_cast<double>(n_rows);
    const double cell_w = bw / static_cast<double>(n_cols);

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n_rows; ++i) {
        const double shift = n_rows > 1 ? (i % 2 == 0 ? -0.25 : 0.25) * cell_w : 0.0;
        for (std::size_t j = 0; j < n_cols; ++j) {
            const double y = static_cast<double>(r0) + (static_cast<double>(i) + 0.5) * cell_h - 0.5;
            const double x = static_cast<double>(c0) + (static_cast<double>(j) + 0.5) * cell_w - 0.5 + shift;
            const double yc = std::clamp(std::round(y), static_cast<double>(r0), static_cast<double>(r1));
            const double xc = std::clamp(std::round(x), static_cast<double>(c0), static_cast<double>(c1));
            const std::size_t p = nearest_foreground(fg, w, yc, xc);
            if (std::find(candidates.begin(), candidates.end(), p) == candidates.end()) candidates.push_back(p);
        }
    }
    if (candidates.size() > k) return farthest_points(candidates, w, k, seed % candidates.size());
    // Too few distinct grid seeds: extend with farthest foreground pixels.
    std::vector<double> dist(fg.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < fg.size(); ++i)
        for (std::size_t c : candidates) {
            const double dr = static_cast<double>(fg[i] / w) - static_cast<double>(c / w);
            const double dc = static_cast<double>(fg[i] % w) - static_cast<double>(c % w);
            dist[i] = std::min(dist[i], dr * dr + dc * dc);
        }
    while (candidates.size() < k) {
        const auto it = std::max_element(dist.begin(), dist.end());
        if (*it <= 0.0) break;
        const std::size_t p = fg[static_cast<std::size_t>(it - dist.begin())];
        candidates.push_back(p);
        for (std::size_t i = 0; i < fg.size(); ++i) {
            const double dr = static_cast<double>(fg[i] / w) - static_cast<double>(p / w);
            const double dc = static_cast<double>(fg[i] % w) - static_cast<double>(p % w);
            dist[i] = std::min(dist[i], dr * dr + dc * dc);
        }
    }
    return candidates;
}

/// Merges undersized components into neighbours and caps the segment count.
/// `labels` holds cluster ids (>= 0) on foreground and -1 elsewhere. Returns
/// final contiguous labels 1..n (0 on background).
inline std::vector<int> enforce_connectivity(const std::vector<int>& labels, std::size_t h, std::size_t w,
                                             double min_size, std::size_t max_segments, int& n_out) {
    std::vector<Component> comps;
    const std::vector<int> comp_of = connected_components(labels, h, w, comps);

    // Each component starts as its own segment; segments merge by union.
    const std::size_t n = comps.size();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::vector<std::size_t> size(n);
    std::vector<double> sum_r(n, 0.0), sum_c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        size[i] = comps[i].pixels.size();
        for (std::size_t p : comps[i].pixels) {
            sum_r[i] += static_cast<double>(p / w);
            sum_c[i] += static_cast<double>(p % w);
        }
    }
    const auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<std::vector<int>> members;
    const auto absorb = [&](int from, int into) {
        parent[from] = into;
        members[into].insert(members[into].end(), members[from].begin(), members[from].end());
        members[from].clear();
        size[into] += size[from];
        sum_r[into] += sum_r[from];
        sum_c[into] += sum_c[from];
    };
    // Component adjacency, fixed for the whole merge process.
    std::vector<std::vector<int>> comp_adj(n);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (comp_of[p] < 0) continue;
        const std::size_t r = p / w, c = p % w;
        const auto link = [&](std::size_t q) {
            if (comp_of[q] >= 0 && comp_of[q] != comp_of[p]) {
                comp_adj[comp_of[p]].push_back(comp_of[q]);
            }
        };
        if (r + 1 < h) link(p + w);
        if (c + 1 < w) link(p + 1);
        if (r > 0) link(p - w);
        if (c > 0) link(p - 1);
    }
    for (auto& a : comp_adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    members.resize(n);
    for (std::size_t i = 0; i < n; ++i) members[i].push_back(static_cast<int>(i));
    const auto neighbours = [&](int root) {
        std::vector<int> out;
        for (int m : members[root])
            for (int a : comp_adj[m]) {
                const int other = find(a);
                if (other != root && std::find(out.begin(), out.end(), other) == out.end()) out.push_back(other);
            }
        return out;
    };
    const auto largest = [&](const std::vector<int>& roots) {
        int best = roots.front();
        for (int r : roots)
            if (size[r] > size[best] || (size[r] == size[best] && r < best)) best = r;
        return best;
    };
    const auto roots_by_size = [&]() {
        std::vector<int> roots;
        for (std::size_t i = 0; i < n; ++i)
            if (find(static_cast<int>(i)) == static_cast<int>(i)) roots.push_back(static_cast<int>(i));
        std::stable_sort(roots.begin(), roots.end(), [&](int a, int b) { return size[a] < size[b]; });
        return roots;
    };

    // Orphans: components below min_size merge into their largest neighbour.
    for (bool merged = true; merged;) {
        merged = false;
        for (int root : roots_by_size()) {
            if (static_cast<double>(size[root]) >= min_size) break;
            const auto nb = neighbours(root);
            if (nb.empty()) continue;
            absorb(root, largest(nb));
            merged = true;
            break;
        }
    }
    // Cap: merge the smallest segment until at most max_segments remain. An
    // isolated segment goes to the segment with the nearest centre.
    for (auto roots = roots_by_size(); roots.size() > max_segments; roots = roots_by_size()) {
        const int victim = roots.front();
        auto nb = neighbours(victim);
        if (nb.empty()) {
            const double vr = sum_r[victim] / static_cast<double>(size[victim]);
            const double vc = sum_c[victim] / static_cast<double>(size[victim]);
            int best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (int r : roots) {
                if (r == victim) continue;
                const double dr = sum_r[r] / static_cast<double>(size[r]) - vr;
                const double dc = sum_c[r] / static_cast<double>(size[r]) - vc;
                const double d = dr * dr + dc * dc;
                if (d < best_d || (d == best_d && r < best)) {
                    best_d = d;
                    best = r;
                }
            }
            absorb(victim, best);
        } else {
            absorb(victim, largest(nb));
        }
    }

    // Relabel 1..n in row-major order of first appearance.
    std::vector<int> out(labels.size(), 0);
    std::vector<int> final_label(n, 0);
    int next = 0;
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (comp_of[p] < 0) continue;
        const int root = find(comp_of[p]);
        if (final_label[root] == 0) final_label[root] = ++next;
        out[p] = final_label[root];
    }
    n_out = next;
    return out;
}

}  // namespace detail

/// SLIC over token features restricted to the foreground.
///
/// Distance: |f_a - f_b|^2 / sigma_f^2 + compactness^2 * |x_a - x_b|^2 / s^2,
/// with sigma_f the RMS feature deviation over the foreground and
/// s = sqrt(foreground_area / n_segments). Every foreground pixel is compared
/// against every centre, so coverage never depends on a search window.
inline SegmentMap slic_segment(const WorkingGrid& work, const SlicParams& params) {
    if (params.n_segments < 1) throw ValidationError("n_segments must be >= 1");
    if (params.compactness < 0.0 || !std::isfinite(params.compactness))
        throw ValidationError("compactness must be a nonnegative number");
    if (params.max_iters < 1) throw ValidationError("max_iters must be >= 1");

    const std::size_t h = work.work_h, w = work.work_w, dim = work.dim;
    std::vector<std::size_t> fg;
    for (std::size_t p = 0; p < work.size(); ++p)
        if (work.mask[p] == 1) fg.push_back(p);
    if (fg.empty()) throw NoForegroundError("no foreground");

    const std::size_t area = fg.size();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params.n_segments), area);
    const double interval = std::sqrt(static_cast<double>(area) / static_cast<double>(k));

    std::vector<double> mean(dim, 0.0);
    for (std::size_t p : fg) {
        const auto f = work.feature(p);
        for (std::size_t d = 0; d < dim; ++d) mean[d] += f[d];
    }
    for (auto& m : mean) m /= static_cast<double>(area);
    double var = 0.0;
    for (std::size_t p : fg) {
        const auto f = work.feature(p);
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = f[d] - mean[d];
            var += diff * diff;
        }
    }
    var /= static_cast<double>(area);
    const double feature_weight = var > 0.0 ? 1.0 / var : 0.0;
    const double spatial_weight = params.compactness * params.compactness / (interval * interval);

    // Centres: feature mean and position.
    const auto seeds = detail::seed_centers(fg, w, k, interval, params.seed);
    const std::size_t kc = seeds.size();
    std::vector<double> c_feat(kc * dim), c_row(kc), c_col(kc);
    for (std::size_t i = 0; i < kc; ++i) {
        const auto f = work.feature(seeds[i]);
        std::copy(f.begin(), f.end(), c_feat.begin() + static_cast<std::ptrdiff_t>(i * dim));
        c_row[i] = static_cast<double>(seeds[i] / w);
        c_col[i] = static_cast<double>(seeds[i] % w);
    }

    std::vector<int> assign(area, -1);
    for (int iter = 0; iter < params.max_iters; ++iter) {
        std::vector<int> next(area);
        parallel_for(area, params.threads, [&](std::size_t i) {
            const std::size_t p = fg[i];
            const auto f = work.feature(p);
            const double pr = static_cast<double>(p / w), pc = static_cast<double>(p % w);
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < kc; ++c) {
                double df = 0.0;
                const double* cf = c_feat.data() + c * dim;
                for (std::size_t d = 0; d < dim; ++d) {
                    const double diff = f[d] - cf[d];
                    df += diff * diff;
                }
                const double dr = pr - c_row[c], dc = pc - c_col[c];
                const double dist = feature_weight * df + spatial_weight * (dr * dr + dc * dc);
                if (dist < best_d) {
                    best_d = dist;
                    best = static_cast<int>(c);
                }
            }
            next[i] = best;
        });
        const bool converged = next == assign;
        assign = std::move(next);
        if (converged) break;

        // Centre update in fixed pixel order.
        std::vector<double> acc_feat(kc * dim, 0.0), acc_row(kc, 0.0), acc_col(kc, 0.0);
        std::vector<std::size_t> count(kc, 0);
        for (std::size_t i = 0; i < area; ++i) {
            const auto c = static_cast<std::size_t>(assign[i]);
            const auto f = work.feature(fg[i]);
            for (std::size_t d = 0; d < dim; ++d) acc_feat[c * dim + d] += f[d];
            acc_row[c] += static_cast<double>(fg[i] / w);
            acc_col[c] += static_cast<double>(fg[i] % w);
            ++count[c];
        }
        for (std::size_t c = 0; c < kc; ++c) {
            if (count[c] == 0) continue;
            const double inv = 1.0 / static_cast<double>(count[c]);
            for (std::size_t d = 0; d < dim; ++d) c_feat[c * dim + d] = acc_feat[c * dim + d] * inv;
            c_row[c] = acc_row[c] * inv;
            c_col[c] = acc_col[c] * inv;
        }
    }

    std::vector<int> cluster(work.size(), -1);
    for (std::size_t i = 0; i < area; ++i) cluster[fg[i]] = assign[i];

    SegmentMap seg;
    seg.work_h = h;
    seg.work_w = w;
    seg.requested = params.n_segments;
    const double min_size = static_cast<double>(area) / (4.0 * static_cast<double>(params.n_segments));
    seg.labels = detail::enforce_connectivity(cluster, h, w, min_size, k, seg.n_actual);
    return seg;
}

/// One keypoint per segment: mean working-resolution feature over the
/// segment's pixels and the segment centre (coordinate mean, snapped onto the
/// segment when the mean pixel is not a member).
inline std::vector<Keypoint> extract_keypoints(const SegmentMap& seg, const WorkingGrid& work, const TokenGrid& grid,
                                               std::optional<int> class_label = std::nullopt) {
    if (seg.work_h != work.work_h || seg.work_w != work.work_w || seg.labels.size() != work.size())
        throw ValidationError("segment map and working grid are not co-registered");
    const std::size_t w = work.work_w, dim = work.dim;
    const auto n = static_cast<std::size_t>(seg.n_actual);

    std::vector<std::vector<double>> sums(n, std::vector<double>(dim, 0.0));
    std::vector<double> sum_r(n, 0.0), sum_c(n, 0.0);
    std::vector<std::size_t> count(n, 0);
    for (std::size_t p = 0; p < seg.labels.size(); ++p) {
        const int label = seg.labels[p];
        if (label <= 0) continue;
        const auto s = static_cast<std::size_t>(label - 1);
        const auto f = work.feature(p);
        for (std::size_t d = 0; d < dim; ++d) sums[s][d] += f[d];
        sum_r[s] += static_cast<double>(p / w);
        sum_c[s] += static_cast<double>(p % w);
        ++count[s];
    }

    const double scale_r = static_cast<double>(grid.orig_h) / static_cast<double>(work.work_h);
    const double scale_c = static_cast<double>(grid.orig_w) / static_cast<double>(work.work_w);

    std::vector<Keypoint> out;
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        if (count[s] == 0) throw ValidationError("segment " + std::to_string(s + 1) + " has no pixels");
        Keypoint kp;
        kp.segment_id = static_cast<int>(s + 1);
        kp.pixel_count = count[s];
        kp.image_id = grid.image_id;
        kp.class_label = class_label;
        kp.representation.resize(dim);
        const double inv = 1.0 / static_cast<double>(count[s]);
        for (std::size_t d = 0; d < dim; ++d) kp.representation[d] = static_cast<float>(sums[s][d] * inv);

        PixelPoint centre{sum_r[s] * inv, sum_c[s] * inv};
        const auto rr = static_cast<std::size_t>(std::lround(centre.row));
        const auto rc = static_cast<std::size_t>(std::lround(centre.col));
        if (seg.labels[rr * w + rc] != kp.segment_id) {
            double best_d = std::numeric_limits<double>::infinity();
            std::size_t best = 0;
            for (std::size_t p = 0; p < seg.labels.size(); ++p) {
                if (seg.labels[p] != kp.segment_id) continue;
                const double dr = static_cast<double>(p / w) - centre.row;
                const double dc = static_cast<double>(p % w) - centre.col;
                const double d = dr * dr + dc * dc;
                if (d < best_d) {
                    best_d = d;
                    best = p;
                }
            }
            centre = {static_cast<double>(best / w), static_cast<double>(best % w)};
        }
        kp.centroid_work = centre;
        kp.centroid_input = {centre.row * scale_r, centre.col * scale_c};
        out.push_back(std::move(kp));
    }
    return out;
}

struct KeypointParams {
    std::size_t scale_factor = 4;
    SlicParams slic;
};

/// Full image-wise pipeline: working resolution, resample, segment, extract.
inline std::vector<Keypoint> image_keypoints(const TokenGrid& grid, const ForegroundMask& mask,
                                             const KeypointParams& params,
                                             std::optional<int> class_label = std::nullopt) {
    const auto [wh, ww] = choose_working_resolution(grid, params.scale_factor);
    const WorkingGrid work = resample(grid, mask, wh, ww);
    const SegmentMap seg = slic_segment(work, params.slic);
    return extract_keypoints(seg, work, grid, class_label);
}

}  // namespace kcc
