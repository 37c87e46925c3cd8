#pragma once

// Prototype selection and the persisted prototype gallery.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kcc/config.hpp"
#include "kcc/container.hpp"
#include "kcc/cosine.hpp"
#include "kcc/error.hpp"
#include "kcc/keypoints.hpp"
#include "kcc/parallel.hpp"

namespace kcc {

struct PrototypeRecord {
    std::string image_id;
    int class_label = 0;
    std::vector<Keypoint> keypoints;
    std::vector<float> global_vector;
    std::optional<std::string> image_path;
    std::size_t orig_h = 0;
    std::size_t orig_w = 0;

    friend bool operator==(const PrototypeRecord&, const PrototypeRecord&) = default;
};

struct PrototypeGallery {
    std::vector<PrototypeRecord> records;  // sorted by (class_label, image_id)
    std::size_t per_class = 10;
    std::vector<int> classes;
    std::vector<std::string> class_names;
    PipelineConfig config;
    std::string fingerprint;
    std::map<int, std::size_t> shortfall;  // class -> images available when < per_class
    std::vector<std::string> skipped;      // images dropped for empty foreground

    std::size_t size() const noexcept { return records.size(); }

    friend bool operator==(const PrototypeGallery&, const PrototypeGallery&) = default;
};

/// Image-level summary used to rank prototypes: the class token when the
/// encoder provides one, otherwise the mean keypoint representation.
inline std::vector<float> compute_global_vector(const TokenGrid& grid, const std::vector<Keypoint>& keypoints) {
    if (grid.cls_vector) return *grid.cls_vector;
    if (keypoints.empty()) throw ValidationError("cannot summarize image '" + grid.image_id + "'");
    std::vector<double> acc(keypoints.front().representation.size(), 0.0);
    for (const auto& kp : keypoints)
        for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += kp.representation[d];
    std::vector<float> out(acc.size());
    for (std::size_t d = 0; d < acc.size(); ++d)
        out[d] = static_cast<float>(acc[d] / static_cast<double>(keypoints.size()));
    return out;
}

using ClassImages = std::map<int, std::vector<std::pair<std::string, std::vector<float>>>>;

namespace detail {

inline std::mt19937_64 class_rng(std::uint64_t seed, int class_label) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(class_label)};
    return std::mt19937_64(seq);
}

inline double medoid_cost(const std::vector<double>& dist, std::size_t n, const std::vector<std::size_t>& medoids) {
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t m : medoids) best = std::min(best, dist[i * n + m]);
        cost += best;
    }
    return cost;
}

/// PAM k-medoids under cosine distance: seeded D^2 initialisation followed by
/// best-improvement swaps until no swap lowers the total cost.
inline std::vector<std::size_t> k_medoids(const std::vector<std::vector<float>>& points, std::size_t k,
                                          std::mt19937_64& rng) {
    const std::size_t n = points.size();
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = cosine_distance(points[i], points[j]);

    std::vector<std::size_t> medoids{static_cast<std::size_t>(rng() % n)};
    std::vector<char> is_medoid(n, 0);
    is_medoid[medoids[0]] = 1;
    while (medoids.size() < k) {
        std::vector<double> weight(n, 0.0);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (is_medoid[i]) continue;
            double d = std::numeric_limits<double>::infinity();
            for (std::size_t m : medoids) d = std::min(d, dist[i * n + m]);
            weight[i] = d * d;
            total += weight[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            double run = 0.0;
            for (std::size_t i = 0; i < n && pick == n; ++i) {
                if (is_medoid[i] || weight[i] <= 0.0) continue;
                run += weight[i];
                if (u < run) pick = i;
            }
            if (pick == n)
                for (std::size_t i = n; i-- > 0;)
                    if (!is_medoid[i] && weight[i] > 0.0) {
                        pick = i;
                        break;
                    }
        } else {
            for (std::size_t i = 0; i < n && pick == n; ++i)
                if (!is_medoid[i]) pick = i;
        }
        medoids.push_back(pick);
        is_medoid[pick] = 1;
    }

    double cost = medoid_cost(dist, n, medoids);
    for (int iter = 0; iter < 1000; ++iter) {
        double best_cost = cost;
        std::size_t best_slot = k, best_candidate = n;
        for (std::size_t slot = 0; slot < k; ++slot) {
            for (std::size_t o = 0; o < n; ++o) {
                if (is_medoid[o]) continue;
                auto trial = medoids;
                trial[slot] = o;
                const double c = medoid_cost(dist, n, trial);
                if (c < best_cost - 1e-12) {
                    best_cost = c;
                    best_slot = slot;
                    best_candidate = o;
                }
            }
        }
        if (best_slot == k) break;
        is_medoid[medoids[best_slot]] = 0;
        is_medoid[best_candidate] = 1;
        medoids[best_slot] = best_candidate;
        cost = best_cost;
    }
    return medoids;
}

}  // namespace detail

/// Chooses min(per_class, available) distinct images per class. The result
/// lists image ids sorted ascending and is a pure function of the inputs.
inline std::map<int, std::vector<std::string>> select_prototypes(const ClassImages& class_images,
                                                                 std::size_t per_class,
                                                                 SelectionStrategy strategy, std::uint64_t seed) {
    if (class_images.empty()) throw ValidationError("empty class list");
    if (per_class == 0) throw ValidationError("per_class must be >= 1");
    std::map<int, std::vector<std::string>> out;
    for (const auto& [label, images] : class_images) {
        if (images.empty()) throw ValidationError("class " + std::to_string(label) + " has no images");
        // Canonical order so the result does not depend on input order.
        auto sorted = images;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<std::string> chosen;
        if (sorted.size() <= per_class) {
            for (const auto& [id, v] : sorted) chosen.push_back(id);
        } else {
            auto rng = detail::class_rng(seed, label);
            if (strategy == SelectionStrategy::Random) {
                std::vector<std::size_t> order(sorted.size());
                std::iota(order.begin(), order.end(), std::size_t{0});
                for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
                for (std::size_t i = 0; i < per_class; ++i) chosen.push_back(sorted[order[i]].first);
            } else {
                std::vector<std::vector<float>> points;
                for (const auto& [id, v] : sorted) points.push_back(v);
                for (std::size_t m : detail::k_medoids(points, per_class, rng)) chosen.push_back(sorted[m].first);
            }
        }
        std::sort(chosen.begin(), chosen.end());
        out.emplace(label, std::move(chosen));
    }
    return out;
}

/// Runs the keypoint pipeline over every labelled image, selects prototypes,
/// and assembles the gallery. Images whose foreground vanishes are skipped.
inline PrototypeGallery build_gallery(const Dataset& ds, const PipelineConfig& config) {
    config.validate();
    ds.validate();
    PipelineConfig cfg = config;
    cfg.encoder_id = ds.encoder_id;
    const KeypointParams params = cfg.keypoint_params();

    std::vector<const TokenGrid*> candidates;
    for (const auto& g : ds.grids)
        if (ds.image_classes.contains(g.image_id)) candidates.push_back(&g);
    if (candidates.empty()) throw ValidationError("dataset has no labelled images");

    struct Work {
        std::vector<Keypoint> keypoints;
        std::vector<float> global;
        bool skipped = false;
    };
    std::vector<Work> work(candidates.size());
    parallel_for(candidates.size(), resolve_jobs(cfg.jobs), [&](std::size_t i) {
        const TokenGrid& g = *candidates[i];
        const ForegroundMask* m = ds.find_mask(g.image_id);
        if (m == nullptr) throw ValidationError("image '" + g.image_id + "': no foreground mask");
        const int label = ds.image_classes.at(g.image_id);
        try {
            work[i].keypoints = image_keypoints(g, *m, params, label);
            work[i].global = compute_global_vector(g, work[i].keypoints);
            if (squared_norm(std::span<const float>(work[i].global)) <= 0.0)
                throw ValidationError("zero global vector");
        } catch (const NoForegroundError&) {
            work[i].skipped = true;
        } catch (const Error& e) {
            throw ValidationError("image '" + g.image_id + "': " + e.what());
        }
    });

    PrototypeGallery gallery;
    gallery.per_class = cfg.per_class;
    gallery.class_names = ds.class_names;
    ClassImages class_images;
    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (work[i].skipped) {
            gallery.skipped.push_back(candidates[i]->image_id);
            continue;
        }
        const int label = ds.image_classes.at(candidates[i]->image_id);
        class_images[label].emplace_back(candidates[i]->image_id, work[i].global);
        index_of[candidates[i]->image_id] = i;
    }
    std::sort(gallery.skipped.begin(), gallery.skipped.end());
    if (class_images.empty()) throw ValidationError("every labelled image has an empty foreground");

    const auto selected = select_prototypes(class_images, cfg.per_class, cfg.selection, cfg.seed);
    for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
        const int label = static_cast<int>(c);
        const auto it = class_images.find(label);
        const std::size_t available = it == class_images.end() ? 0 : it->second.size();
        if (available < cfg.per_class) gallery.shortfall[label] = available;
    }
    for (const auto& [label, ids] : selected) {
        gallery.classes.push_back(label);
        for (const auto& id : ids) {
            const std::size_t i = index_of.at(id);
            PrototypeRecord rec;
            rec.image_id = id;
            rec.class_label = label;
            rec.keypoints = std::move(work[i].keypoints);
            rec.global_vector = std::move(work[i].global);
            rec.orig_h = candidates[i]->orig_h;
            rec.orig_w = candidates[i]->orig_w;
            if (const auto p = ds.image_paths.find(id); p != ds.image_paths.end()) rec.image_path = p->second;
            gallery.records.push_back(std::move(rec));
        }
    }
    gallery.config = cfg;
    gallery.fingerprint = cfg.fingerprint();
    return gallery;
}

inline PrototypeGallery build_gallery(const std::filesystem::path& dataset, const PipelineConfig& config) {
    return build_gallery(load_dataset(dataset), config);
}

// Persistence ----------------------------------------------------------------

inline std::vector<std::byte> serialize_gallery(const PrototypeGallery& g) {
    ContainerWriter writer;
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t i = 0; i < g.records.size(); ++i) {
        const auto& r = g.records[i];
        const std::string base = "record/" + std::to_string(i);
        const std::size_t dim = r.global_vector.size();
        std::vector<float> reps;
        reps.reserve(r.keypoints.size() * dim);
        nlohmann::json kps = nlohmann::json::array();
        for (const auto& kp : r.keypoints) {
            if (kp.representation.size() != dim) throw ValidationError("keypoint dimension mismatch in gallery");
            reps.insert(reps.end(), kp.representation.begin(), kp.representation.end());
            kps.push_back({{"segment_id", kp.segment_id},
                           {"pixel_count", kp.pixel_count},
                           {"centroid_work", {kp.centroid_work.row, kp.centroid_work.col}},
                           {"centroid_input", {kp.centroid_input.row, kp.centroid_input.col}}});
        }
        writer.add_f32(base + "/reps", {r.keypoints.size(), dim}, reps);
        writer.add_f32(base + "/global", {dim}, r.global_vector);
        records.push_back({{"image_id", r.image_id},
                           {"class_label", r.class_label},
                           {"image_path", r.image_path ? nlohmann::json(*r.image_path) : nlohmann::json(nullptr)},
                           {"orig_h", r.orig_h},
                           {"orig_w", r.orig_w},
                           {"dim", dim},
                           {"keypoints", std::move(kps)},
                           {"reps", base + "/reps"},
                           {"global", base + "/global"}});
    }
    nlohmann::json meta = {{"kind", "gallery"},
                           {"fingerprint", g.fingerprint},
                           {"config", g.config.to_json()},
                           {"per_class", g.per_class},
                           {"classes", g.classes},
                           {"class_names", g.class_names},
                           {"shortfall", g.shortfall},
                           {"skipped", g.skipped},
                           {"records", std::move(records)}};
    return writer.serialize(kGalleryMagic, std::move(meta));
}

inline void save_gallery(const PrototypeGallery& g, const std::filesystem::path& path) {
    const auto bytes = serialize_gallery(g);
    detail::write_file(path, bytes);
}

inline bool is_fingerprint(const std::string& s) {
    return s.size() == 16 &&
           std::all_of(s.begin(), s.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

/// Loads and verifies a gallery. When `expected_fingerprint` is given, a
/// different stored fingerprint is reported as configuration drift.
inline PrototypeGallery load_gallery(const std::filesystem::path& path,
                                     const std::optional<std::string>& expected_fingerprint = std::nullopt) {
    const auto reader = ContainerReader::open(path, kGalleryMagic);
    const auto& meta = reader.metadata();
    const std::string source = path.string();
    PrototypeGallery g;
    try {
        if (meta.at("kind").get<std::string>() != "gallery") throw FormatError(source + ": not a gallery");
        g.fingerprint = meta.at("fingerprint").get<std::string>();
        g.config = PipelineConfig::from_json(meta.at("config"));
        g.per_class = meta.at("per_class").get<std::size_t>();
        g.classes = meta.at("classes").get<std::vector<int>>();
        g.class_names = meta.at("class_names").get<std::vector<std::string>>();
        g.shortfall = meta.at("shortfall").get<std::map<int, std::size_t>>();
        g.skipped = meta.at("skipped").get<std::vector<std::string>>();
        for (const auto& rm : meta.at("records")) {
            PrototypeRecord r;
            r.image_id = rm.at("image_id").get<std::string>();
            r.class_label = rm.at("class_label").get<int>();
            if (!rm.at("image_path").is_null()) r.image_path = rm.at("image_path").get<std::string>();
            r.orig_h = rm.at("orig_h").get<std::size_t>();
            r.orig_w = rm.at("orig_w").get<std::size_t>();
            const auto dim = rm.at("dim").get<std::size_t>();
            const auto& kps = rm.at("keypoints");
            const auto reps = reader.f32(rm.at("reps").get<std::string>(), {kps.size(), dim});
            r.global_vector = reader.f32(rm.at("global").get<std::string>(), {dim});
            for (std::size_t k = 0; k < kps.size(); ++k) {
                Keypoint kp;
                kp.segment_id = kps[k].at("segment_id").get<int>();
                kp.pixel_count = kps[k].at("pixel_count").get<std::size_t>();
                const auto cw = kps[k].at("centroid_work").get<std::vector<double>>();
                const auto ci = kps[k].at("centroid_input").get<std::vector<double>>();
                if (cw.size() != 2 || ci.size() != 2) throw FormatError(source + ": malformed keypoint centroid");
                kp.centroid_work = {cw[0], cw[1]};
                kp.centroid_input = {ci[0], ci[1]};
                kp.representation.assign(reps.begin() + static_cast<std::ptrdiff_t>(k * dim),
                                         reps.begin() + static_cast<std::ptrdiff_t>((k + 1) * dim));
                kp.image_id = r.image_id;
                kp.class_label = r.class_label;
                r.keypoints.push_back(std::move(kp));
            }
            g.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(source + ": malformed gallery manifest: " + e.what());
    } catch (const ValidationError& e) {
        throw FormatError(source + ": invalid stored config: " + e.what());
    }
    if (!is_fingerprint(g.fingerprint)) throw FormatError(source + ": malformed fingerprint");
    if (g.fingerprint != g.config.fingerprint())
        throw FormatError(source + ": stored fingerprint does not match stored config");
    if (expected_fingerprint && *expected_fingerprint != g.fingerprint)
        throw ConfigDriftError("config drift: gallery fingerprint " + g.fingerprint + " differs from expected " +
                               *expected_fingerprint);
    return g;
}

}  // namespace kcc
