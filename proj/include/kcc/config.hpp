#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "kcc/checksum.hpp"
#include "kcc/error.hpp"
#include "kcc/keypoints.hpp"

namespace kcc {

enum class SelectionStrategy { KMedoids, Random };

inline std::string to_string(SelectionStrategy s) {
    return s == SelectionStrategy::KMedoids ? "kmeans-medoid" : "random";
}

inline SelectionStrategy parse_selection(const std::string& s) {
    if (s == "kmeans-medoid") return SelectionStrategy::KMedoids;
    if (s == "random") return SelectionStrategy::Random;
    throw ValidationError("unknown selection strategy '" + s + "'");
}

/// Every knob of the pipeline. Fields marked (fp) enter the gallery fingerprint.
struct PipelineConfig {
    int n_segments = 8;              // (fp)
    std::size_t scale_factor = 4;    // (fp)
    double compactness = 1.0;        // (fp)
    int max_iters = 10;              // (fp)
    std::string distance = "cosine";  // (fp)
    SelectionStrategy selection = SelectionStrategy::KMedoids;  // (fp)
    std::uint64_t seed = 0;          // (fp)
    std::string encoder_id = "unknown";  // (fp)
    std::size_t per_class = 10;
    std::size_t J = 40;
    unsigned jobs = 1;

    void validate() const {
        if (n_segments < 1) throw ValidationError("n_segments must be >= 1");
        if (scale_factor < 1) throw ValidationError("scale_factor must be >= 1");
        if (!(compactness >= 0.0)) throw ValidationError("compactness must be >= 0");
        if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
        if (distance != "cosine") throw ValidationError("unsupported distance '" + distance + "'");
        if (per_class < 1) throw ValidationError("per_class must be >= 1");
        if (J < 1) throw ValidationError("J must be >= 1");
    }

    KeypointParams keypoint_params() const {
        KeypointParams p;
        p.scale_factor = scale_factor;
        p.slic.n_segments = n_segments;
        p.slic.compactness = compactness;
        p.slic.max_iters = max_iters;
        p.slic.seed = seed;
        return p;
    }

    /// Canonical text of the fingerprinted fields.
    std::string fingerprint_source() const {
        std::ostringstream os;
        os.precision(17);
        os << "n_segments=" << n_segments << ";scale_factor=" << scale_factor << ";compactness=" << compactness
           << ";max_iters=" << max_iters << ";distance=" << distance << ";selection=" << to_string(selection)
           << ";seed=" << seed << ";encoder=" << encoder_id;
        return os.str();
    }

    std::string fingerprint() const { return hex64(fnv1a64(fingerprint_source())); }

    nlohmann::json to_json() const {
        return {{"n_segments", n_segments}, {"scale_factor", scale_factor}, {"compactness", compactness},
                {"max_iters", max_iters},   {"distance", distance},         {"selection", to_string(selection)},
                {"seed", seed},             {"encoder_id", encoder_id},     {"per_class", per_class},
                {"J", J},                   {"jobs", jobs}};
    }

    /// Overlays keys present in `j` onto this config. Unknown keys are errors.
    void merge_json(const nlohmann::json& j) {
        if (!j.is_object()) throw ValidationError("config must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            try {
                if (key == "n_segments") n_segments = value.get<int>();
                else if (key == "scale_factor") scale_factor = value.get<std::size_t>();
                else if (key == "compactness") compactness = value.get<double>();
                else if (key == "max_iters") max_iters = value.get<int>();
                else if (key == "distance") distance = value.get<std::string>();
                else if (key == "selection") selection = parse_selection(value.get<std::string>());
                else if (key == "seed") seed = value.get<std::uint64_t>();
                else if (key == "encoder_id") encoder_id = value.get<std::string>();
                else if (key == "per_class") per_class = value.get<std::size_t>();
                else if (key == "J") J = value.get<std::size_t>();
                else if (key == "jobs") jobs = value.get<unsigned>();
                else throw ValidationError("unknown config key '" + key + "'");
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError("config key '" + key + "': " + e.what());
            }
        }
        validate();
    }

    static PipelineConfig from_json(const nlohmann::json& j) {
        PipelineConfig c;
        c.merge_json(j);
        return c;
    }

    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Parses a JSON config text. Syntax errors carry line and column.
inline PipelineConfig parse_config(const std::string& text, const std::string& source = "config") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // Recover the line from the byte offset the parser reports.
        std::size_t line = 1, column = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        throw ValidationError(source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                              ": config parse error: " + e.what());
    }
    return PipelineConfig::from_json(j);
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

}  // namespace kcc
