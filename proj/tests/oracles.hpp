#pragma once

// Brute-force reference computations for the test suites. Nothing here calls
// into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "kcc/kcc.hpp"

namespace oracle {

/// Plain cosine distance in long double, written independently of kcc::cosine_distance.
inline long double cos_dist(const std::vector<float>& a, const std::vector<float>& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    return 1.0L - dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Mean of the working-grid features over pixels labelled `segment`.
inline std::vector<double> masked_mean(const kcc::SegmentMap& seg, const kcc::WorkingGrid& work, int segment) {
    std::vector<double> acc(work.dim, 0.0);
    std::size_t n = 0;
    for (std::size_t r = 0; r < work.work_h; ++r)
        for (std::size_t c = 0; c < work.work_w; ++c) {
            const std::size_t p = r * work.work_w + c;
            if (seg.labels[p] != segment) continue;
            for (std::size_t d = 0; d < work.dim; ++d) acc[d] += work.features[p * work.dim + d];
            ++n;
        }
    for (auto& v : acc) v /= static_cast<double>(n);
    return acc;
}

struct OracleMatch {
    int query_segment;
    std::string proto_image;
    int proto_segment;
    int label;
    auto operator<=>(const OracleMatch&) const = default;
};

/// Mutual NN by building both full nearest-neighbour maps explicitly with
/// per-pair cosine distances. Ties resolve to the smaller
/// (class_label, image_id, segment_id) / smaller query index.
inline std::set<OracleMatch> mutual_nn(const std::vector<kcc::Keypoint>& query,
                                       const std::vector<const kcc::PrototypeRecord*>& protos) {
    struct P {
        int label;
        std::string image;
        int segment;
        const std::vector<float>* rep;
    };
    std::vector<P> pool;
    for (const auto* r : protos)
        for (const auto& kp : r->keypoints) pool.push_back({r->class_label, r->image_id, kp.segment_id, &kp.representation});
    const auto key = [](const P& p) { return std::tie(p.label, p.image, p.segment); };

    std::vector<std::size_t> nn_q(query.size());
    for (std::size_t i = 0; i < query.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < pool.size(); ++j) {
            const auto dj = cos_dist(query[i].representation, *pool[j].rep);
            const auto db = cos_dist(query[i].representation, *pool[best].rep);
            if (dj < db || (dj == db && key(pool[j]) < key(pool[best]))) best = j;
        }
        nn_q[i] = best;
    }
    std::vector<std::size_t> nn_p(pool.size());
    for (std::size_t j = 0; j < pool.size(); ++j) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < query.size(); ++i)
            if (cos_dist(query[i].representation, *pool[j].rep) < cos_dist(query[best].representation, *pool[j].rep))
                best = i;
        nn_p[j] = best;
    }
    std::set<OracleMatch> out;
    for (std::size_t i = 0; i < query.size(); ++i)
        if (nn_p[nn_q[i]] == i)
            out.insert({query[i].segment_id, pool[nn_q[i]].image, pool[nn_q[i]].segment, pool[nn_q[i]].label});
    return out;
}

inline std::set<OracleMatch> as_set(const kcc::MatchSet& m) {
    std::set<OracleMatch> out;
    for (const auto& x : m.matches)
        out.insert({x.query_segment_id, x.prototype_image_id, x.prototype_segment_id, x.class_label});
    return out;
}

/// Top-J by fully sorting every record on (similarity desc, class, id).
inline std::vector<std::string> top_j(const std::vector<float>& query, const kcc::PrototypeGallery& g, std::size_t J) {
    std::vector<std::tuple<long double, int, std::string>> all;
    for (const auto& r : g.records) all.emplace_back(-(1.0L - cos_dist(query, r.global_vector)), r.class_label, r.image_id);
    std::sort(all.begin(), all.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(J, all.size()); ++i) out.push_back(std::get<2>(all[i]));
    return out;
}

inline std::map<int, double> histogram(const std::vector<int>& labels, const std::vector<int>& classes) {
    std::map<int, double> h;
    for (int c : classes) h[c] = 0.0;
    for (int l : labels) h[l] += 1.0;
    for (auto& [c, v] : h) v /= static_cast<double>(labels.size());
    return h;
}

inline std::size_t distinct_images(const kcc::MatchSet& m, int label) {
    std::set<std::string> s;
    for (const auto& x : m.matches)
        if (x.class_label == label) s.insert(x.prototype_image_id);
    return s.size();
}

// Random instance generators ---------------------------------------------------

inline std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> v(dim);
    do {
        for (auto& x : v) x = n(rng);
    } while (kcc::squared_norm(std::span<const float>(v)) == 0.0);
    return v;
}

inline std::vector<kcc::Keypoint> random_keypoints(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                                                   const std::string& image, std::optional<int> label) {
    std::vector<kcc::Keypoint> out;
    for (std::size_t i = 0; i < n; ++i) {
        kcc::Keypoint kp;
        kp.segment_id = static_cast<int>(i + 1);
        kp.representation = random_vector(rng, dim);
        kp.pixel_count = 1;
        kp.image_id = image;
        kp.class_label = label;
        out.push_back(std::move(kp));
    }
    return out;
}

/// Gallery of random records; `n_classes` labels assigned round-robin.
inline kcc::PrototypeGallery random_gallery(std::mt19937_64& rng, std::size_t records, std::size_t max_kps,
                                            std::size_t dim, int n_classes) {
    kcc::PrototypeGallery g;
    std::uniform_int_distribution<std::size_t> nk(1, max_kps);
    for (int c = 0; c < n_classes; ++c) g.classes.push_back(c);
    for (std::size_t i = 0; i < records; ++i) {
        kcc::PrototypeRecord r;
        r.class_label = static_cast<int>(i % static_cast<std::size_t>(n_classes));
        r.image_id = "p" + std::to_string(1000 + i);
        r.keypoints = random_keypoints(rng, nk(rng), dim, r.image_id, r.class_label);
        r.global_vector = random_vector(rng, dim);
        r.orig_h = r.orig_w = 64;
        g.records.push_back(std::move(r));
    }
    std::sort(g.records.begin(), g.records.end(), [](const auto& a, const auto& b) {
        return std::tie(a.class_label, a.image_id) < std::tie(b.class_label, b.image_id);
    });
    return g;
}

/// Working grid with random smooth-ish features and a mask made of random
/// rectangles (always at least one foreground pixel).
inline kcc::WorkingGrid random_working_grid(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t dim) {
    kcc::WorkingGrid g;
    g.work_h = h;
    g.work_w = w;
    g.dim = dim;
    g.features.resize(h * w * dim);
    std::normal_distribution<float> n(0.0f, 1.0f);
    for (auto& f : g.features) f = n(rng);
    g.mask.assign(h * w, 0);
    std::uniform_int_distribution<std::size_t> rr(0, h - 1), cc(0, w - 1);
    std::uniform_int_distribution<int> nrect(1, 4);
    const int rects = nrect(rng);
    for (int k = 0; k < rects; ++k) {
        std::size_t r0 = rr(rng), r1 = rr(rng), c0 = cc(rng), c1 = cc(rng);
        if (r0 > r1) std::swap(r0, r1);
        if (c0 > c1) std::swap(c0, c1);
        for (std::size_t r = r0; r <= r1; ++r)
            for (std::size_t c = c0; c <= c1; ++c) g.mask[r * w + c] = 1;
    }
    // Sprinkle isolated pixels to exercise connectivity handling.
    std::uniform_int_distribution<int> sprinkle(0, 6);
    const int extra = sprinkle(rng);
    for (int k = 0; k < extra; ++k) g.mask[rr(rng) * w + cc(rng)] = 1;
    return g;
}

}  // namespace oracle
