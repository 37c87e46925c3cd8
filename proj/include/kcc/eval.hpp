#pragma once

// Dataset evaluation (accuracy and explanation complexity) and grid sweeps.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "kcc/classifier.hpp"
#include "kcc/config.hpp"
#include "kcc/container.hpp"
#include "kcc/gallery.hpp"
#include "kcc/parallel.hpp"

namespace kcc {

struct QueryOutcome {
    std::string image_id;
    int true_class = -1;
    int predicted_class = -1;
    bool abstained = false;
    std::size_t complexity = 0;
    std::size_t num_matches = 0;
    std::size_t candidate_keypoints = 0;

    bool correct() const noexcept { return !abstained && predicted_class == true_class; }

    friend bool operator==(const QueryOutcome&, const QueryOutcome&) = default;
};

struct EvalReport {
    std::string dataset_id;
    PipelineConfig config;
    std::size_t total = 0;
    std::size_t correct = 0;
    std::size_t abstentions = 0;
    double accuracy = 0.0;
    double mean_complexity = 0.0;
    double abstention_rate = 0.0;
    std::map<int, double> per_class_accuracy;
    std::vector<QueryOutcome> log;  // sorted by image_id
    std::vector<std::string> warnings;
    // Telemetry: not part of the deterministic result.
    double wall_ms = 0.0;
    std::size_t peak_candidate_keypoints = 0;
};

/// Classifies every labelled image of `ds` against `gallery`. Abstentions count
/// as errors; mean complexity averages over non-abstained queries.
inline EvalReport evaluate(const Dataset& ds, const PrototypeGallery& gallery, const PipelineConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    EvalReport report;
    report.dataset_id = ds.dataset_id;
    report.config = config;
    if (ds.encoder_id != gallery.config.encoder_id)
        report.warnings.push_back("dataset encoder '" + ds.encoder_id + "' differs from gallery encoder '" +
                                  gallery.config.encoder_id + "'");

    std::vector<const TokenGrid*> queries;
    for (const auto& g : ds.grids)
        if (ds.image_classes.contains(g.image_id)) queries.push_back(&g);
    std::sort(queries.begin(), queries.end(),
              [](const TokenGrid* a, const TokenGrid* b) { return a->image_id < b->image_id; });
    if (queries.empty()) throw ValidationError("dataset has no labelled images to evaluate");

    std::vector<QueryOutcome> log(queries.size());
    parallel_for(queries.size(), resolve_jobs(config.jobs), [&](std::size_t i) {
        const TokenGrid& g = *queries[i];
        const ForegroundMask* m = ds.find_mask(g.image_id);
        if (m == nullptr) throw ValidationError("image '" + g.image_id + "': no foreground mask");
        const Prediction p = predict(g, *m, gallery, config);
        QueryOutcome& o = log[i];
        o.image_id = g.image_id;
        o.true_class = ds.image_classes.at(g.image_id);
        o.predicted_class = p.predicted_class;
        o.abstained = p.abstained;
        o.complexity = p.complexity;
        o.num_matches = p.match_set.size();
        o.candidate_keypoints = p.match_set.candidate_keypoints;
    });

    std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
    std::size_t complexity_sum = 0;
    for (const auto& o : log) {
        ++report.total;
        auto& pc = per_class[o.true_class];
        ++pc.second;
        if (o.abstained) {
            ++report.abstentions;
        } else {
            complexity_sum += o.complexity;
        }
        if (o.correct()) {
            ++report.correct;
            ++pc.first;
        }
        report.peak_candidate_keypoints = std::max(report.peak_candidate_keypoints, o.candidate_keypoints);
    }
    report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.total);
    report.abstention_rate = static_cast<double>(report.abstentions) / static_cast<double>(report.total);
    const std::size_t answered = report.total - report.abstentions;
    report.mean_complexity = answered > 0 ? static_cast<double>(complexity_sum) / static_cast<double>(answered) : 0.0;
    for (const auto& [c, counts] : per_class)
        report.per_class_accuracy[c] = static_cast<double>(counts.first) / static_cast<double>(counts.second);
    report.log = std::move(log);
    report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return report;
}

inline nlohmann::json to_json(const EvalReport& r, bool with_telemetry = true, bool with_log = true) {
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [c, a] : r.per_class_accuracy) per_class[std::to_string(c)] = a;
    auto config = r.config.to_json();
    config.erase("jobs");
    nlohmann::json out = {{"dataset_id", r.dataset_id},
                          {"config", std::move(config)},
                          {"total", r.total},
                          {"correct", r.correct},
                          {"abstentions", r.abstentions},
                          {"accuracy", r.accuracy},
                          {"mean_complexity", r.mean_complexity},
                          {"abstention_rate", r.abstention_rate},
                          {"per_class_accuracy", std::move(per_class)},
                          {"warnings", r.warnings}};
    if (with_log) {
        nlohmann::json log = nlohmann::json::array();
        for (const auto& o : r.log)
            log.push_back({{"image_id", o.image_id},
                           {"true_class", o.true_class},
                           {"predicted_class", o.abstained ? nlohmann::json(nullptr) : nlohmann::json(o.predicted_class)},
                           {"abstained", o.abstained},
                           {"complexity", o.complexity},
                           {"num_matches", o.num_matches}});
        out["log"] = std::move(log);
    }
    if (with_telemetry)
        out["telemetry"] = {{"wall_ms", r.wall_ms}, {"peak_candidate_keypoints", r.peak_candidate_keypoints}};
    return out;
}

// Sweeps ---------------------------------------------------------------------

struct SweepGrid {
    std::vector<int> n_segments;
    std::vector<std::size_t> per_class;
    std::vector<std::size_t> J;
    std::vector<std::uint64_t> seeds;
};

inline SweepGrid parse_sweep_grid(const nlohmann::json& j, const PipelineConfig& base) {
    if (!j.is_object()) throw ValidationError("sweep grid must be a JSON object");
    SweepGrid g;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "n_segments") g.n_segments = value.get<std::vector<int>>();
            else if (key == "per_class") g.per_class = value.get<std::vector<std::size_t>>();
            else if (key == "J") g.J = value.get<std::vector<std::size_t>>();
            else if (key == "seeds") g.seeds = value.get<std::vector<std::uint64_t>>();
            else throw ValidationError("unknown sweep key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("sweep grid: ") + e.what());
    }
    if (g.n_segments.empty()) g.n_segments = {base.n_segments};
    if (g.per_class.empty()) g.per_class = {base.per_class};
    if (g.J.empty()) g.J = {base.J};
    if (g.seeds.empty()) g.seeds = {base.seed};
    return g;
}

/// The Cartesian product in (n_segments, per_class, J, seed) order with
/// duplicate configurations removed (first occurrence kept).
inline std::vector<PipelineConfig> expand_grid(const SweepGrid& grid, const PipelineConfig& base,
                                               std::vector<std::string>* warnings = nullptr) {
    std::vector<PipelineConfig> out;
    std::set<std::tuple<int, std::size_t, std::size_t, std::uint64_t>> seen;
    std::size_t duplicates = 0;
    for (int ns : grid.n_segments)
        for (std::size_t pc : grid.per_class)
            for (std::size_t j : grid.J)
                for (std::uint64_t seed : grid.seeds) {
                    if (!seen.emplace(ns, pc, j, seed).second) {
                        ++duplicates;
                        continue;
                    }
                    PipelineConfig c = base;
                    c.n_segments = ns;
                    c.per_class = pc;
                    c.J = j;
                    c.seed = seed;
                    c.validate();
                    out.push_back(c);
                }
    if (duplicates > 0 && warnings != nullptr)
        warnings->push_back("removed " + std::to_string(duplicates) + " duplicate sweep configuration(s)");
    return out;
}

struct SweepResult {
    std::vector<EvalReport> rows;
    std::vector<std::string> warnings;
};

/// Builds one gallery per (n_segments, per_class, seed) from `train` and
/// evaluates `test` for every J.
inline SweepResult run_sweep(const Dataset& train, const Dataset& test, const SweepGrid& grid,
                             const PipelineConfig& base) {
    SweepResult result;
    const auto configs = expand_grid(grid, base, &result.warnings);
    std::map<std::tuple<int, std::size_t, std::uint64_t>, PrototypeGallery> galleries;
    for (const auto& c : configs) {
        const auto key = std::make_tuple(c.n_segments, c.per_class, c.seed);
        auto it = galleries.find(key);
        if (it == galleries.end()) it = galleries.emplace(key, build_gallery(train, c)).first;
        PipelineConfig eval_config = it->second.config;
        eval_config.J = c.J;
        eval_config.jobs = c.jobs;
        result.rows.push_back(evaluate(test, it->second, eval_config));
    }
    return result;
}

inline std::string sweep_csv(const SweepResult& r) {
    std::ostringstream os;
    os.precision(6);
    os << "n_segments,per_class,J,seed,accuracy,mean_complexity,abstention_rate\n";
    for (const auto& row : r.rows)
        os << row.config.n_segments << ',' << row.config.per_class << ',' << row.config.J << ',' << row.config.seed
           << ',' << row.accuracy << ',' << row.mean_complexity << ',' << row.abstention_rate << '\n';
    return os.str();
}

}  // namespace kcc
