#pragma once

// Prototype pruning and mutual nearest-neighbour keypoint matching.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "kcc/cosine.hpp"
#include "kcc/error.hpp"
#include "kcc/gallery.hpp"
#include "kcc/keypoints.hpp"

namespace kcc {

struct Match {
    int query_segment_id = 0;
    std::string prototype_image_id;
    int prototype_segment_id = 0;
    int class_label = 0;
    double similarity = 0.0;

    friend bool operator==(const Match&, const Match&) = default;
};

struct MatchSet {
    std::vector<Match> matches;  // ordered by query keypoint order
    std::string query_image_id;
    std::vector<std::string> candidate_ids;
    std::size_t J = 0;
    std::size_t candidate_keypoints = 0;  // |U^P| after pruning

    bool empty() const noexcept { return matches.empty(); }
    std::size_t size() const noexcept { return matches.size(); }

    friend bool operator==(const MatchSet&, const MatchSet&) = default;
};

/// The J gallery records whose global vector is most cosine-similar to the
/// query's. Ties are broken by (class_label, image_id).
inline std::vector<const PrototypeRecord*> prune_prototypes(std::span<const float> query_global,
                                                            const PrototypeGallery& gallery, std::size_t J) {
    if (J == 0) throw ValidationError("J must be >= 1");
    if (gallery.records.empty()) throw ValidationError("empty gallery");
    const auto q = normalized(query_global);
    struct Scored {
        double sim;
        const PrototypeRecord* rec;
    };
    std::vector<Scored> scored;
    scored.reserve(gallery.records.size());
    for (const auto& r : gallery.records) {
        if (r.global_vector.size() != q.size()) throw ValidationError("global vector dimension mismatch");
        const auto p = normalized(std::span<const float>(r.global_vector));
        double dot = 0.0;
        for (std::size_t d = 0; d < q.size(); ++d) dot += q[d] * p[d];
        scored.push_back({dot, &r});
    }
    const auto better = [](const Scored& a, const Scored& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return std::tie(a.rec->class_label, a.rec->image_id) < std::tie(b.rec->class_label, b.rec->image_id);
    };
    const std::size_t keep = std::min(J, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
    std::vector<const PrototypeRecord*> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[i].rec);
    return out;
}

inline std::vector<const PrototypeRecord*> all_prototypes(const PrototypeGallery& gallery) {
    std::vector<const PrototypeRecord*> out;
    for (const auto& r : gallery.records) out.push_back(&r);
    return out;
}

/// Mutual nearest neighbours between the query keypoints and the union of the
/// candidates' keypoints under cosine distance.
///
/// Similarities come from one query-by-candidate product of unit-normalized
/// representations. Argmin ties resolve to the earliest element in the global
/// order: (class_label, image_id, segment_id) on the prototype side and query
/// keypoint order on the query side.
inline MatchSet mutual_nn(const std::vector<Keypoint>& query, const std::vector<const PrototypeRecord*>& candidates,
                          std::size_t J = 0) {
    if (query.empty()) throw ValidationError("no query keypoints");
    if (candidates.empty()) throw ValidationError("no candidate prototypes");

    struct ProtoRef {
        const PrototypeRecord* rec;
        const Keypoint* kp;
    };
    std::vector<ProtoRef> pool;
    for (const auto* rec : candidates) {
        if (rec->keypoints.empty()) throw ValidationError("prototype '" + rec->image_id + "' has no keypoints");
        for (const auto& kp : rec->keypoints) pool.push_back({rec, &kp});
    }
    std::sort(pool.begin(), pool.end(), [](const ProtoRef& a, const ProtoRef& b) {
        return std::tie(a.rec->class_label, a.rec->image_id, a.kp->segment_id) <
               std::tie(b.rec->class_label, b.rec->image_id, b.kp->segment_id);
    });

    const std::size_t dim = query.front().representation.size();
    const std::size_t nq = query.size(), np = pool.size();
    std::vector<double> qmat(nq * dim), pmat(np * dim);
    for (std::size_t i = 0; i < nq; ++i) {
        if (query[i].representation.size() != dim) throw ValidationError("query keypoint dimension mismatch");
        const auto u = normalized(std::span<const float>(query[i].representation));
        std::copy(u.begin(), u.end(), qmat.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
    for (std::size_t j = 0; j < np; ++j) {
        if (pool[j].kp->representation.size() != dim) throw ValidationError("prototype keypoint dimension mismatch");
        const auto u = normalized(std::span<const float>(pool[j].kp->representation));
        std::copy(u.begin(), u.end(), pmat.begin() + static_cast<std::ptrdiff_t>(j * dim));
    }

    // sim = Q * P^T, row-major nq x np.
    std::vector<double> sim(nq * np, 0.0);
    for (std::size_t i = 0; i < nq; ++i) {
        const double* qi = qmat.data() + i * dim;
        double* row = sim.data() + i * np;
        for (std::size_t j = 0; j < np; ++j) {
            const double* pj = pmat.data() + j * dim;
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) dot += qi[d] * pj[d];
            row[j] = dot;
        }
    }

    // Highest similarity == smallest cosine distance; strict comparison keeps
    // the first index on ties.
    std::vector<std::size_t> nn_of_query(nq, 0), nn_of_proto(np, 0);
    for (std::size_t i = 0; i < nq; ++i) {
        const double* row = sim.data() + i * np;
        std::size_t best = 0;
        for (std::size_t j = 1; j < np; ++j)
            if (row[j] > row[best]) best = j;
        nn_of_query[i] = best;
    }
    for (std::size_t j = 0; j < np; ++j) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < nq; ++i)
            if (sim[i * np + j] > sim[best * np + j]) best = i;
        nn_of_proto[j] = best;
    }

    MatchSet out;
    out.query_image_id = query.front().image_id;
    out.J = J;
    out.candidate_keypoints = np;
    for (const auto* rec : candidates) out.candidate_ids.push_back(rec->image_id);
    for (std::size_t i = 0; i < nq; ++i) {
        const std::size_t j = nn_of_query[i];
        if (nn_of_proto[j] != i) continue;
        Match m;
        m.query_segment_id = query[i].segment_id;
        m.prototype_image_id = pool[j].rec->image_id;
        m.prototype_segment_id = pool[j].kp->segment_id;
        m.class_label = pool[j].rec->class_label;
        m.similarity = std::clamp(sim[i * np + j], -1.0, 1.0);
        out.matches.push_back(std::move(m));
    }
    return out;
}

}  // namespace kcc
