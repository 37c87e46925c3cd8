#pragma once

// Classification by counting mutual-NN matches per prototype class.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kcc/config.hpp"
#include "kcc/container.hpp"
#include "kcc/error.hpp"
#include "kcc/gallery.hpp"
#include "kcc/keypoints.hpp"
#include "kcc/matching.hpp"

namespace kcc {

struct Prediction {
    std::string query_image_id;
    std::map<int, double> scores;  // empty when abstained
    int predicted_class = -1;
    MatchSet match_set;
    std::size_t complexity = 0;
    bool abstained = false;
    std::string diagnostic;
    std::vector<Keypoint> query_keypoints;
    std::size_t query_h = 0;  // source image size, for rendering
    std::size_t query_w = 0;
};

/// Fraction of matches per class; every class in `classes` gets an entry.
/// Returns nullopt for an empty match set, which callers treat as abstention.
inline std::optional<std::map<int, double>> count_scores(const MatchSet& m, const std::vector<int>& classes) {
    if (m.empty()) return std::nullopt;
    std::map<int, std::size_t> counts;
    for (int c : classes) counts[c] = 0;
    for (const auto& match : m.matches) ++counts[match.class_label];
    std::map<int, double> scores;
    const auto total = static_cast<double>(m.size());
    for (const auto& [c, n] : counts) scores[c] = static_cast<double>(n) / total;
    return scores;
}

/// Class with the most matches; ties go to the lowest class id.
inline int argmax_class(const std::map<int, double>& scores) {
    int best = -1;
    double best_score = -1.0;
    for (const auto& [c, s] : scores)
        if (s > best_score) {
            best = c;
            best_score = s;
        }
    return best;
}

/// Distinct prototype images among the matches of `predicted_class`.
inline std::size_t explanation_complexity(const MatchSet& m, int predicted_class) {
    std::set<std::string> images;
    for (const auto& match : m.matches)
        if (match.class_label == predicted_class) images.insert(match.prototype_image_id);
    return images.size();
}

inline Prediction predict(const TokenGrid& grid, const ForegroundMask& mask, const PrototypeGallery& gallery,
                          const PipelineConfig& config) {
    if (config.fingerprint() != gallery.fingerprint)
        throw ConfigDriftError("config drift: query config fingerprint " + config.fingerprint() +
                               " differs from gallery fingerprint " + gallery.fingerprint);
    Prediction pred;
    pred.query_image_id = grid.image_id;
    pred.query_h = grid.orig_h;
    pred.query_w = grid.orig_w;
    try {
        pred.query_keypoints = image_keypoints(grid, mask, config.keypoint_params());
    } catch (const NoForegroundError&) {
        pred.abstained = true;
        pred.diagnostic = "no foreground";
        pred.match_set.query_image_id = grid.image_id;
        pred.match_set.J = config.J;
        return pred;
    }
    const auto global = compute_global_vector(grid, pred.query_keypoints);
    const auto candidates = prune_prototypes(global, gallery, config.J);
    pred.match_set = mutual_nn(pred.query_keypoints, candidates, config.J);
    const auto scores = count_scores(pred.match_set, gallery.classes);
    if (!scores) {
        pred.abstained = true;
        pred.diagnostic = "no matches";
        return pred;
    }
    pred.scores = *scores;
    pred.predicted_class = argmax_class(pred.scores);
    pred.complexity = explanation_complexity(pred.match_set, pred.predicted_class);
    return pred;
}

inline nlohmann::json to_json(const Prediction& p, const std::vector<std::string>& class_names = {}) {
    nlohmann::json scores = nlohmann::json::object();
    for (const auto& [c, s] : p.scores) scores[std::to_string(c)] = s;
    nlohmann::json matches = nlohmann::json::array();
    for (const auto& m : p.match_set.matches)
        matches.push_back({{"query_segment_id", m.query_segment_id},
                           {"prototype_image_id", m.prototype_image_id},
                           {"prototype_segment_id", m.prototype_segment_id},
                           {"class_label", m.class_label},
                           {"similarity", m.similarity}});
    nlohmann::json out = {{"image_id", p.query_image_id},
                          {"abstained", p.abstained},
                          {"predicted_class", p.abstained ? nlohmann::json(nullptr) : nlohmann::json(p.predicted_class)},
                          {"scores", std::move(scores)},
                          {"complexity", p.complexity},
                          {"num_matches", p.match_set.size()},
                          {"candidates", p.match_set.candidate_ids},
                          {"J", p.match_set.J},
                          {"matches", std::move(matches)}};
    if (!p.diagnostic.empty()) out["diagnostic"] = p.diagnostic;
    if (!p.abstained && p.predicted_class >= 0 && static_cast<std::size_t>(p.predicted_class) < class_names.size())
        out["predicted_name"] = class_names[static_cast<std::size_t>(p.predicted_class)];
    return out;
}

}  // namespace kcc
