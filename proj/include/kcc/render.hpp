#pragma once

// SVG rendering of keypoint-match explanations: the query on the left, the
// matched prototypes to its right, and one line per match between markers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kcc/classifier.hpp"
#include "kcc/container.hpp"
#include "kcc/error.hpp"
#include "kcc/gallery.hpp"

namespace kcc {

using KeypointLabels = std::map<std::pair<std::string, int>, std::string>;

struct RenderOptions {
    std::filesystem::path image_root;  // image paths are resolved against this for existence checks / embedding
    bool embed_images = false;         // base64 data URIs instead of path references
    bool allow_missing_images = false;  // draw placeholders instead of failing
    bool only_predicted_class = true;
    bool show_unmatched = false;
    bool show_class_names = false;
    double panel_height = 180.0;
};

namespace detail {

inline constexpr std::array<const char*, 10> kPalette = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                                                         "#42d4f4", "#f032e6", "#bfef45", "#9a6324", "#469990"};

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string base64(const std::vector<std::byte>& bytes) {
    static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t v = static_cast<std::uint32_t>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) v |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) v |= static_cast<std::uint32_t>(bytes[i + 2]);
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += i + 1 < bytes.size() ? table[(v >> 6) & 63] : '=';
        out += i + 2 < bytes.size() ? table[v & 63] : '=';
    }
    return out;
}

inline std::string mime_type(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".gif") return "image/gif";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

struct Panel {
    std::string image_id;
    double x = 0, y = 0, width = 0, height = 0;
    double scale = 1.0;  // display pixels per source pixel
    std::size_t match_count = 0;
    int class_label = -1;
    const PrototypeRecord* record = nullptr;

    std::pair<double, double> place(const PixelPoint& p) const {
        return {x + (p.col + 0.5) * scale, y + (p.row + 0.5) * scale};
    }
};

}  // namespace detail

/// Renders an explanation as an SVG 1.1 document. Output is byte-stable for
/// identical inputs.
inline std::string render_explanation(const Prediction& pred, const PrototypeGallery& gallery,
                                      const std::map<std::string, std::string>& image_paths,
                                      const std::optional<KeypointLabels>& labels = std::nullopt,
                                      const RenderOptions& options = {}) {
    using detail::fmt;
    using detail::xml_escape;

    if (pred.query_h == 0 || pred.query_w == 0) throw ValidationError("prediction lacks the query image size");

    // Matches to draw and the prototype panels they need.
    std::vector<const Match*> drawn;
    for (const auto& m : pred.match_set.matches)
        if (!pred.abstained && (!options.only_predicted_class || m.class_label == pred.predicted_class))
            drawn.push_back(&m);

    std::map<std::string, const PrototypeRecord*> by_id;
    for (const auto& r : gallery.records) by_id[r.image_id] = &r;

    std::vector<detail::Panel> protos;
    for (const Match* m : drawn) {
        auto it = std::find_if(protos.begin(), protos.end(),
                               [&](const detail::Panel& p) { return p.image_id == m->prototype_image_id; });
        if (it == protos.end()) {
            const auto rec = by_id.find(m->prototype_image_id);
            if (rec == by_id.end())
                throw ValidationError("matched prototype '" + m->prototype_image_id + "' is not in the gallery");
            detail::Panel p;
            p.image_id = m->prototype_image_id;
            p.class_label = rec->second->class_label;
            p.record = rec->second;
            protos.push_back(p);
            it = protos.end() - 1;
        }
        ++it->match_count;
    }
    std::stable_sort(protos.begin(), protos.end(), [](const detail::Panel& a, const detail::Panel& b) {
        if (a.match_count != b.match_count) return a.match_count > b.match_count;
        return std::tie(a.class_label, a.image_id) < std::tie(b.class_label, b.image_id);
    });
    // Lines follow panel order, then query keypoint order within a panel.
    std::stable_sort(drawn.begin(), drawn.end(), [&](const Match* a, const Match* b) {
        const auto rank = [&](const Match* m) {
            return std::find_if(protos.begin(), protos.end(),
                                [&](const detail::Panel& p) { return p.image_id == m->prototype_image_id; }) -
                   protos.begin();
        };
        return rank(a) < rank(b);
    });

    // Layout.
    constexpr double margin = 16.0, gap = 24.0, query_gap = 56.0, header = 44.0, footer = 28.0;
    const double ph = options.panel_height;
    detail::Panel query;
    query.image_id = pred.query_image_id;
    query.scale = ph / static_cast<double>(pred.query_h);
    query.x = margin;
    query.y = header;
    query.width = static_cast<double>(pred.query_w) * query.scale;
    query.height = ph;
    double cursor = query.x + query.width + query_gap;
    for (auto& p : protos) {
        p.scale = ph / static_cast<double>(p.record->orig_h);
        p.x = cursor;
        p.y = header;
        p.width = static_cast<double>(p.record->orig_w) * p.scale;
        p.height = ph;
        cursor = p.x + p.width + gap;
    }
    const double total_w = std::max(cursor - (protos.empty() ? query_gap : gap) + margin, 320.0);
    const double total_h = header + ph + footer;

    const auto image_href = [&](const std::string& id) -> std::optional<std::string> {
        const auto it = image_paths.find(id);
        if (it == image_paths.end()) {
            if (options.allow_missing_images) return std::nullopt;
            throw IoError("no image path for '" + id + "'");
        }
        const std::filesystem::path full = options.image_root / it->second;
        if (!std::filesystem::exists(full)) {
            if (options.allow_missing_images) return std::nullopt;
            throw IoError("missing image file '" + full.string() + "'");
        }
        if (options.embed_images)
            return "data:" + detail::mime_type(full) + ";base64," + detail::base64(detail::read_file(full));
        return it->second;
    };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" version=\"1.1\" "
        << "width=\"" << fmt(total_w) << "\" height=\"" << fmt(total_h) << "\" viewBox=\"0 0 " << fmt(total_w) << ' '
        << fmt(total_h) << "\">\n"
        << "<rect x=\"0\" y=\"0\" width=\"" << fmt(total_w) << "\" height=\"" << fmt(total_h)
        << "\" fill=\"#ffffff\"/>\n";

    const auto emit_panel = [&](const detail::Panel& p, const char* role) {
        svg << "<g class=\"panel " << role << "\" data-image-id=\"" << xml_escape(p.image_id) << "\">\n";
        if (const auto href = image_href(p.image_id)) {
            svg << "  <image x=\"" << fmt(p.x) << "\" y=\"" << fmt(p.y) << "\" width=\"" << fmt(p.width)
                << "\" height=\"" << fmt(p.height) << "\" preserveAspectRatio=\"none\" xlink:href=\""
                << xml_escape(*href) << "\"/>\n";
        } else {
            svg << "  <rect class=\"placeholder\" x=\"" << fmt(p.x) << "\" y=\"" << fmt(p.y) << "\" width=\""
                << fmt(p.width) << "\" height=\"" << fmt(p.height) << "\" fill=\"#d9d9d9\"/>\n";
        }
        svg << "  <rect x=\"" << fmt(p.x) << "\" y=\"" << fmt(p.y) << "\" width=\"" << fmt(p.width) << "\" height=\""
            << fmt(p.height) << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n"
            << "</g>\n";
    };
    emit_panel(query, "query");
    for (const auto& p : protos) emit_panel(p, "prototype");

    const auto find_query_kp = [&](int segment) -> const Keypoint& {
        for (const auto& kp : pred.query_keypoints)
            if (kp.segment_id == segment) return kp;
        throw ValidationError("match references unknown query segment " + std::to_string(segment));
    };
    const auto find_proto_kp = [&](const PrototypeRecord& r, int segment) -> const Keypoint& {
        for (const auto& kp : r.keypoints)
            if (kp.segment_id == segment) return kp;
        throw ValidationError("match references unknown segment " + std::to_string(segment) + " of '" + r.image_id +
                              "'");
    };

    struct Marker {
        double x, y;
        const char* color;
        std::string image_id;
        int segment;
    };
    std::vector<Marker> markers;
    for (std::size_t i = 0; i < drawn.size(); ++i) {
        const Match& m = *drawn[i];
        const char* color = detail::kPalette[i % detail::kPalette.size()];
        const auto& panel = *std::find_if(protos.begin(), protos.end(),
                                          [&](const detail::Panel& p) { return p.image_id == m.prototype_image_id; });
        const auto [qx, qy] = query.place(find_query_kp(m.query_segment_id).centroid_input);
        const auto [px, py] = panel.place(find_proto_kp(*panel.record, m.prototype_segment_id).centroid_input);
        svg << "<line class=\"match-line\" x1=\"" << fmt(qx) << "\" y1=\"" << fmt(qy) << "\" x2=\"" << fmt(px)
            << "\" y2=\"" << fmt(py) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        markers.push_back({qx, qy, color, pred.query_image_id, m.query_segment_id});
        markers.push_back({px, py, color, m.prototype_image_id, m.prototype_segment_id});
    }

    if (options.show_unmatched) {
        for (const auto& kp : pred.query_keypoints) {
            const bool matched = std::any_of(drawn.begin(), drawn.end(),
                                             [&](const Match* m) { return m->query_segment_id == kp.segment_id; });
            if (matched) continue;
            const auto [x, y] = query.place(kp.centroid_input);
            svg << "<circle class=\"marker-unmatched\" cx=\"" << fmt(x) << "\" cy=\"" << fmt(y)
                << "\" r=\"4\" fill=\"#808080\" fill-opacity=\"0.4\"/>\n";
        }
    }
    for (const auto& mk : markers) {
        svg << "<circle class=\"marker\" cx=\"" << fmt(mk.x) << "\" cy=\"" << fmt(mk.y) << "\" r=\"5\" fill=\""
            << mk.color << "\" stroke=\"#ffffff\" stroke-width=\"1.5\"/>\n";
        if (labels) {
            const auto it = labels->find({mk.image_id, mk.segment});
            if (it != labels->end())
                svg << "<text class=\"label\" x=\"" << fmt(mk.x + 7.0) << "\" y=\"" << fmt(mk.y - 7.0)
                    << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#000000\">" << xml_escape(it->second)
                    << "</text>\n";
        }
    }

    // Summary.
    if (pred.abstained) {
        svg << "<text class=\"banner\" x=\"" << fmt(margin) << "\" y=\"28.00\" font-family=\"sans-serif\" "
            << "font-size=\"16\" fill=\"#b00000\">no matches</text>\n";
    } else {
        std::vector<std::pair<int, double>> ranked(pred.scores.begin(), pred.scores.end());
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        std::string text = "matches: " + std::to_string(pred.match_set.size()) +
                           "  images to inspect: " + std::to_string(pred.complexity) + "  scores:";
        for (const auto& [c, s] : ranked) {
            if (s <= 0.0) continue;
            text += ' ';
            if (options.show_class_names) {
                const auto idx = static_cast<std::size_t>(c);
                text += (idx < gallery.class_names.size() ? gallery.class_names[idx] : std::to_string(c)) + "=";
            }
            text += fmt(s);
        }
        svg << "<text class=\"summary\" x=\"" << fmt(margin) << "\" y=\"28.00\" font-family=\"sans-serif\" "
            << "font-size=\"14\" fill=\"#000000\">" << xml_escape(text) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace kcc
