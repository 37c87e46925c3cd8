#pragma once

// Hand-built predictions with fixed keypoint positions, used for the SVG
// golden files. They avoid segmentation entirely so the goldens only move
// when the renderer does.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kcc/kcc.hpp"

namespace fixtures {

inline kcc::Keypoint at(const std::string& image, int segment, double row, double col) {
    kcc::Keypoint k;
    k.segment_id = segment;
    k.representation = {1.0f};
    k.pixel_count = 1;
    k.image_id = image;
    k.centroid_work = {row / 4.0, col / 4.0};
    k.centroid_input = {row, col};
    return k;
}

inline kcc::PrototypeGallery gallery() {
    kcc::PrototypeGallery g;
    g.classes = {0, 1};
    g.class_names = {"heron", "egret"};
    const auto add = [&](const std::string& id, int label, std::size_t h, std::size_t w) {
        kcc::PrototypeRecord r;
        r.image_id = id;
        r.class_label = label;
        r.orig_h = h;
        r.orig_w = w;
        r.global_vector = {1.0f};
        r.image_path = "img/" + id + ".png";
        for (int s = 1; s <= 4; ++s) r.keypoints.push_back(at(id, s, 10.0 * s, 8.0 * s + 3.0));
        g.records.push_back(r);
    };
    add("p_a", 0, 64, 64);
    add("p_b", 0, 48, 64);
    add("p_c", 1, 64, 32);
    return g;
}

inline std::map<std::string, std::string> image_paths() {
    return {{"q", "img/q.png"}, {"p_a", "img/p_a.png"}, {"p_b", "img/p_b.png"}, {"p_c", "img/p_c.png"}};
}

inline kcc::Match match(int q, const std::string& image, int p, int label, double sim) {
    kcc::Match m;
    m.query_segment_id = q;
    m.prototype_image_id = image;
    m.prototype_segment_id = p;
    m.class_label = label;
    m.similarity = sim;
    return m;
}

inline kcc::Prediction base_query() {
    kcc::Prediction p;
    p.query_image_id = "q";
    p.query_h = 64;
    p.query_w = 80;
    for (int s = 1; s <= 5; ++s) p.query_keypoints.push_back(at("q", s, 6.0 + 11.0 * s, 70.0 - 12.0 * s));
    return p;
}

/// Finishes a prediction from its match list the same way the classifier does.
inline kcc::Prediction finish(kcc::Prediction p, const kcc::PrototypeGallery& g) {
    if (p.match_set.matches.empty()) {
        p.abstained = true;
        p.diagnostic = "no matches";
        return p;
    }
    p.scores = *kcc::count_scores(p.match_set, g.classes);
    p.predicted_class = kcc::argmax_class(p.scores);
    p.complexity = kcc::explanation_complexity(p.match_set, p.predicted_class);
    return p;
}

struct Case {
    std::string name;
    kcc::Prediction prediction;
    std::optional<kcc::KeypointLabels> labels;
    kcc::RenderOptions options;
};

inline std::vector<Case> golden_cases() {
    const auto g = gallery();
    std::vector<Case> out;

    auto single = base_query();
    single.match_set.matches = {match(2, "p_a", 3, 0, 0.93)};
    out.push_back({"single_match", finish(single, g), std::nullopt, {}});

    auto multi = base_query();
    multi.match_set.matches = {match(1, "p_b", 1, 0, 0.8), match(2, "p_a", 2, 0, 0.9), match(3, "p_a", 4, 0, 0.7),
                               match(4, "p_c", 1, 1, 0.6), match(5, "p_b", 3, 0, 0.85)};
    kcc::KeypointLabels labels{{{"q", 2}, "head"}, {{"p_a", 2}, "head"}, {{"p_c", 1}, "wing & tail"}};
    kcc::RenderOptions multi_opts;
    multi_opts.show_unmatched = true;
    multi_opts.show_class_names = true;
    out.push_back({"multi_prototype", finish(multi, g), labels, multi_opts});

    auto none = base_query();
    none.match_set.query_image_id = "q";
    out.push_back({"abstained", finish(none, g), std::nullopt, {}});
    return out;
}

inline std::string render(const Case& c) {
    kcc::RenderOptions o = c.options;
    o.image_root = KCC_GOLDEN_DIR;
    return kcc::render_explanation(c.prediction, gallery(), image_paths(), c.labels, o);
}

inline std::filesystem::path golden_path(const std::string& name) {
    return std::filesystem::path(KCC_GOLDEN_DIR) / (name + ".svg");
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline bool update_requested() {
    const char* v = std::getenv("KCC_UPDATE_GOLDEN");
    return v != nullptr && std::string(v) == "1";
}

}  // namespace fixtures
