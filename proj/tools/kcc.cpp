// kcc: command-line front end for keypoint counting classifiers.
//
// Exit codes: 0 success, 2 validation error, 3 I/O or file-format error,
// 4 abstention (classify only). KCC_LOG=error|warn|info|debug sets verbosity.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "kcc/kcc.hpp"

namespace {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

Level log_level() {
    const char* env = std::getenv("KCC_LOG");
    if (env == nullptr) return Level::Warn;
    const std::string v = env;
    if (v == "error") return Level::Error;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
}

void log(Level level, const std::string& msg) {
    static const Level threshold = log_level();
    if (level > threshold) return;
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "kcc: " << names[static_cast<int>(level)] << ": " << msg << '\n';
}

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitAbstain = 4;

void emit(const std::string& text, const std::string& output) {
    if (output.empty()) {
        std::cout << text;
    } else {
        kcc::write_text_file(output, text);
        log(Level::Info, "wrote " + output);
    }
}

struct QueryArgs {
    std::string dataset;
    std::string image;
    std::string gallery;
    std::string config;
    std::size_t J = 0;
    unsigned jobs = 1;
};

void add_query_options(CLI::App* cmd, QueryArgs& q) {
    cmd->add_option("--dataset", q.dataset, "Container holding the query image")->required();
    cmd->add_option("--image", q.image, "Query image id")->required();
    cmd->add_option("--gallery", q.gallery, "Gallery file")->required();
    cmd->add_option("--config", q.config, "Config file; must match the gallery fingerprint");
    cmd->add_option("--J", q.J, "Number of closest prototypes to match against");
    cmd->add_option("--jobs", q.jobs, "Worker threads (0 = all cores)");
}

/// Gallery config with query-time overrides. An explicit config file must
/// describe the same pipeline the gallery was built with.
kcc::PipelineConfig query_config(const kcc::PrototypeGallery& g, const std::string& config_path, std::size_t J,
                                 unsigned jobs) {
    kcc::PipelineConfig cfg = g.config;
    if (!config_path.empty()) {
        kcc::PipelineConfig requested = kcc::load_config(config_path);
        requested.encoder_id = g.config.encoder_id;
        if (requested.fingerprint() != g.fingerprint)
            throw kcc::ConfigDriftError("config drift: '" + config_path + "' does not describe the pipeline of the gallery (" +
                                        requested.fingerprint() + " vs " + g.fingerprint + ")");
        cfg = requested;
    }
    if (J > 0) cfg.J = J;
    cfg.jobs = jobs;
    cfg.validate();
    return cfg;
}

kcc::Prediction run_query(const QueryArgs& q, kcc::PrototypeGallery& gallery, kcc::Dataset& ds) {
    ds = kcc::load_dataset(q.dataset);
    gallery = kcc::load_gallery(q.gallery);
    const kcc::TokenGrid* grid = ds.find_grid(q.image);
    const kcc::ForegroundMask* mask = ds.find_mask(q.image);
    if (grid == nullptr) throw kcc::ValidationError("image '" + q.image + "' not found in " + q.dataset);
    if (mask == nullptr) throw kcc::ValidationError("image '" + q.image + "' has no foreground mask");
    if (ds.encoder_id != gallery.config.encoder_id)
        log(Level::Warn, "query encoder '" + ds.encoder_id + "' differs from gallery encoder '" +
                             gallery.config.encoder_id + "'");
    return kcc::predict(*grid, *mask, gallery, query_config(gallery, q.config, q.J, q.jobs));
}

kcc::KeypointLabels load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw kcc::IoError("cannot open labels file '" + path + "'");
    kcc::KeypointLabels labels;
    try {
        const auto j = nlohmann::json::parse(in);
        for (const auto& e : j)
            labels[{e.at("image_id").get<std::string>(), e.at("segment_id").get<int>()}] = e.at("label").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw kcc::ValidationError("labels file '" + path + "': " + e.what());
    }
    return labels;
}

std::string human_prediction(const kcc::Prediction& p) {
    std::ostringstream os;
    os << "image: " << p.query_image_id << '\n';
    if (p.abstained) {
        os << "abstained: " << p.diagnostic << '\n';
        return os.str();
    }
    os << "predicted_class: " << p.predicted_class << '\n'
       << "matches: " << p.match_set.size() << '\n'
       << "complexity: " << p.complexity << '\n';
    for (const auto& [c, s] : p.scores) os << "score[" << c << "]: " << s << '\n';
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Keypoint counting classifier"};
    app.require_subcommand(1);

    std::string output;
    bool as_json = false;
    unsigned jobs = 1;

    // synth
    kcc::SynthSpec synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic token-grid container");
    synth_cmd->add_option("--classes", synth.classes, "Number of classes")->capture_default_str();
    synth_cmd->add_option("--per-class", synth.per_class, "Images per class")->capture_default_str();
    synth_cmd->add_option("--grid", synth.grid, "Token grid side length")->capture_default_str();
    synth_cmd->add_option("--dim", synth.dim, "Token dimension")->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise, "Per-component noise standard deviation")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Sampling seed")->capture_default_str();
    synth_cmd->add_option("--world-seed", synth.world_seed, "Seed of the class directions")->capture_default_str();
    synth_cmd->add_option("--patch-size", synth.patch_size, "Patch size in pixels")->capture_default_str();
    synth_cmd->add_option("--prefix", synth.prefix, "Image id prefix")->capture_default_str();
    synth_cmd->add_flag("--with-cls", synth.with_cls, "Include a class token per image");
    synth_cmd->add_option("--output", output, "Output container")->required();

    // build-gallery
    std::string dataset_path, config_path;
    std::optional<std::uint64_t> seed_override;
    auto* build_cmd = app.add_subcommand("build-gallery", "Select prototypes and precompute their keypoints");
    build_cmd->add_option("--dataset", dataset_path, "Training container")->required();
    build_cmd->add_option("--config", config_path, "Config file (JSON)");
    build_cmd->add_option("--seed", seed_override, "Override the config seed");
    build_cmd->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
    build_cmd->add_option("--output", output, "Gallery file to write")->required();

    // classify
    QueryArgs query;
    auto* classify_cmd = app.add_subcommand("classify", "Classify one image");
    add_query_options(classify_cmd, query);
    classify_cmd->add_flag("--json", as_json, "Machine-readable output");
    classify_cmd->add_option("--output", output, "Write the prediction here instead of stdout");

    // explain
    std::string image_root, labels_path;
    bool embed = false, placeholders = false, all_classes = false, show_unmatched = false, class_names = false;
    auto* explain_cmd = app.add_subcommand("explain", "Render an explanation as SVG");
    add_query_options(explain_cmd, query);
    explain_cmd->add_option("--image-root", image_root, "Directory image paths are relative to");
    explain_cmd->add_option("--labels", labels_path, "JSON list of {image_id, segment_id, label}");
    explain_cmd->add_flag("--embed", embed, "Embed images as base64");
    explain_cmd->add_flag("--placeholders", placeholders, "Draw placeholders for missing images");
    explain_cmd->add_flag("--all-classes", all_classes, "Draw matches of every class");
    explain_cmd->add_flag("--show-unmatched", show_unmatched, "Draw unmatched query keypoints dimmed");
    explain_cmd->add_flag("--class-names", class_names, "Show class names in the summary");
    explain_cmd->add_option("--output", output, "SVG file")->required();

    // evaluate
    std::string gallery_path;
    std::size_t eval_J = 0;
    auto* eval_cmd = app.add_subcommand("evaluate", "Accuracy and complexity over a labelled container");
    eval_cmd->add_option("--dataset", dataset_path, "Test container")->required();
    eval_cmd->add_option("--gallery", gallery_path, "Gallery file")->required();
    eval_cmd->add_option("--config", config_path, "Config file; must match the gallery fingerprint");
    eval_cmd->add_option("--J", eval_J, "Number of closest prototypes");
    eval_cmd->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
    eval_cmd->add_flag("--json", as_json, "Print the full JSON report");
    eval_cmd->add_option("--output", output, "Write the JSON report here");

    // sweep
    std::string train_path, test_path, grid_path;
    auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a grid of (n_segments, per_class, J, seed)");
    sweep_cmd->add_option("--train", train_path, "Training container")->required();
    sweep_cmd->add_option("--test", test_path, "Test container")->required();
    sweep_cmd->add_option("--grid", grid_path, "Sweep grid file (JSON)")->required();
    sweep_cmd->add_option("--config", config_path, "Base config file");
    sweep_cmd->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
    sweep_cmd->add_flag("--json", as_json, "JSON table instead of CSV");
    sweep_cmd->add_option("--output", output, "Table file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*synth_cmd) {
            kcc::write_container(kcc::synthesize(synth), output);
            log(Level::Info, "wrote " + output);
            return 0;
        }
        if (*build_cmd) {
            kcc::PipelineConfig cfg = config_path.empty() ? kcc::PipelineConfig{} : kcc::load_config(config_path);
            if (seed_override) cfg.seed = *seed_override;
            cfg.jobs = jobs;
            const auto gallery = kcc::build_gallery(kcc::load_dataset(dataset_path), cfg);
            for (const auto& id : gallery.skipped) log(Level::Warn, "skipped '" + id + "': empty foreground");
            for (const auto& [c, n] : gallery.shortfall)
                log(Level::Warn, "class " + std::to_string(c) + " has only " + std::to_string(n) + " usable images");
            kcc::save_gallery(gallery, output);
            auto echo = gallery.config.to_json();
            echo.erase("jobs");
            std::cout << nlohmann::json{{"fingerprint", gallery.fingerprint},
                                        {"records", gallery.size()},
                                        {"config", echo}}
                             .dump(2)
                      << '\n';
            return 0;
        }
        if (*classify_cmd) {
            kcc::PrototypeGallery gallery;
            kcc::Dataset ds;
            const auto pred = run_query(query, gallery, ds);
            emit(as_json ? kcc::to_json(pred, gallery.class_names).dump(2) + "\n" : human_prediction(pred), output);
            return pred.abstained ? kExitAbstain : 0;
        }
        if (*explain_cmd) {
            kcc::PrototypeGallery gallery;
            kcc::Dataset ds;
            const auto pred = run_query(query, gallery, ds);
            std::map<std::string, std::string> paths = ds.image_paths;
            for (const auto& r : gallery.records)
                if (r.image_path) paths.emplace(r.image_id, *r.image_path);
            kcc::RenderOptions opts;
            opts.image_root = image_root;
            opts.embed_images = embed;
            opts.allow_missing_images = placeholders;
            opts.only_predicted_class = !all_classes;
            opts.show_unmatched = show_unmatched;
            opts.show_class_names = class_names;
            std::optional<kcc::KeypointLabels> labels;
            if (!labels_path.empty()) labels = load_labels(labels_path);
            kcc::write_text_file(output, kcc::render_explanation(pred, gallery, paths, labels, opts));
            if (pred.abstained) log(Level::Warn, "abstained: " + pred.diagnostic);
            return 0;
        }
        if (*eval_cmd) {
            const auto gallery = kcc::load_gallery(gallery_path);
            const auto ds = kcc::load_dataset(dataset_path);
            const auto cfg = query_config(gallery, config_path, eval_J, jobs);
            const auto report = kcc::evaluate(ds, gallery, cfg);
            for (const auto& w : report.warnings) log(Level::Warn, w);
            const auto j = kcc::to_json(report);
            if (!output.empty()) kcc::write_text_file(output, j.dump(2) + "\n");
            if (as_json) {
                std::cout << j.dump(2) << '\n';
            } else {
                std::cout << "accuracy: " << report.accuracy << '\n'
                          << "mean_complexity: " << report.mean_complexity << '\n'
                          << "abstention_rate: " << report.abstention_rate << '\n'
                          << "queries: " << report.total << '\n';
            }
            return 0;
        }
        if (*sweep_cmd) {
            kcc::PipelineConfig base = config_path.empty() ? kcc::PipelineConfig{} : kcc::load_config(config_path);
            base.jobs = jobs;
            std::ifstream in(grid_path);
            if (!in) throw kcc::IoError("cannot open sweep grid '" + grid_path + "'");
            nlohmann::json grid_json;
            try {
                grid_json = nlohmann::json::parse(in);
            } catch (const nlohmann::json::parse_error& e) {
                throw kcc::ValidationError("sweep grid '" + grid_path + "': " + e.what());
            }
            const auto grid = kcc::parse_sweep_grid(grid_json, base);
            const auto result = kcc::run_sweep(kcc::load_dataset(train_path), kcc::load_dataset(test_path), grid, base);
            for (const auto& w : result.warnings) log(Level::Warn, w);
            if (as_json) {
                nlohmann::json rows = nlohmann::json::array();
                for (const auto& r : result.rows) rows.push_back(kcc::to_json(r, true, false));
                emit(rows.dump(2) + "\n", output);
            } else {
                emit(kcc::sweep_csv(result), output);
            }
            return 0;
        }
    } catch (const kcc::ValidationError& e) {
        log(Level::Error, e.what());
        return kExitValidation;
    } catch (const kcc::IoError& e) {
        log(Level::Error, e.what());
        return kExitIo;
    } catch (const kcc::FormatError& e) {
        log(Level::Error, e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        log(Level::Error, e.what());
        return 1;
    }
    return 0;
}
