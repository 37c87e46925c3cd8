#pragma once

// On-disk container shared by datasets ("KCC1") and galleries ("KCCG").
//
// Layout (all integers little-endian):
//   [0, 4)    magic
//   [4, 8)    u32 format version
//   [8, 16)   u64 manifest length in bytes
//   [16, 20)  u32 CRC-32 of the manifest bytes
//   [20, 20 + manifest length)  UTF-8 JSON manifest
//   payload   raw entries, offsets relative to the payload start
//
// Real arrays are IEEE-754 binary32, row-major. Masks are one byte per pixel.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kcc/checksum.hpp"
#include "kcc/error.hpp"

namespace kcc {

using json = nlohmann::json;

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::string_view kDatasetMagic = "KCC1";
inline constexpr std::string_view kGalleryMagic = "KCCG";
inline constexpr std::size_t kHeaderSize = 20;

/// Patch tokens of one image arranged on their spatial grid.
struct TokenGrid {
    std::string image_id;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t dim = 0;
    std::vector<float> tokens;  // grid_h * grid_w * dim, row-major
    std::optional<std::vector<float>> cls_vector;
    std::size_t orig_h = 0;
    std::size_t orig_w = 0;
    std::size_t patch_size = 1;

    std::size_t num_tokens() const noexcept { return grid_h * grid_w; }

    std::span<const float> token(std::size_t row, std::size_t col) const {
        return {tokens.data() + (row * grid_w + col) * dim, dim};
    }

    void validate() const {
        const std::string ctx = "token grid '" + image_id + "': ";
        if (grid_h == 0 || grid_w == 0) throw ValidationError(ctx + "empty token grid");
        if (dim == 0) throw ValidationError(ctx + "token dimension must be >= 1");
        if (patch_size == 0) throw ValidationError(ctx + "patch size must be >= 1");
        if (orig_h == 0 || orig_w == 0) throw ValidationError(ctx + "empty image size");
        if (tokens.size() != grid_h * grid_w * dim)
            throw ValidationError(ctx + "token buffer size does not match grid shape");
        if (grid_h * patch_size > orig_h + patch_size || grid_w * patch_size > orig_w + patch_size)
            throw ValidationError(ctx + "grid does not fit the image size");
        if (!std::all_of(tokens.begin(), tokens.end(), [](float v) { return std::isfinite(v); }))
            throw ValidationError(ctx + "non-finite token");
        if (cls_vector) {
            if (cls_vector->size() != dim)
                throw ValidationError(ctx + "class token dimension mismatch");
            if (!std::all_of(cls_vector->begin(), cls_vector->end(),
                             [](float v) { return std::isfinite(v); }))
                throw ValidationError(ctx + "non-finite class token");
        }
    }

    friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

/// Binary foreground mask at source image resolution.
struct ForegroundMask {
    std::string image_id;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;  // height * width, 0 or 1

    std::uint8_t at(std::size_t row, std::size_t col) const { return values[row * width + col]; }

    std::size_t foreground_count() const {
        return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
    }

    void validate() const {
        const std::string ctx = "mask '" + image_id + "': ";
        if (height == 0 || width == 0) throw ValidationError(ctx + "empty mask");
        if (values.size() != height * width)
            throw ValidationError(ctx + "mask buffer size does not match shape");
        if (!std::all_of(values.begin(), values.end(), [](std::uint8_t v) { return v <= 1; }))
            throw ValidationError(ctx + "mask values must be 0 or 1");
    }

    friend bool operator==(const ForegroundMask&, const ForegroundMask&) = default;
};

/// Token grids, masks, and labelling metadata for one image collection.
struct Dataset {
    std::string dataset_id;
    std::string encoder_id = "unknown";
    std::vector<std::string> class_names;           // index = dense class id
    std::map<std::string, int> image_classes;       // image_id -> class id
    std::map<std::string, std::string> image_paths;  // image_id -> path, optional
    std::vector<TokenGrid> grids;
    std::vector<ForegroundMask> masks;

    const TokenGrid* find_grid(std::string_view id) const {
        for (const auto& g : grids)
            if (g.image_id == id) return &g;
        return nullptr;
    }

    const ForegroundMask* find_mask(std::string_view id) const {
        for (const auto& m : masks)
            if (m.image_id == id) return &m;
        return nullptr;
    }

    /// Checks every cross-object invariant. Per-object invariants included.
    void validate() const {
        if (grids.empty()) throw ValidationError("empty dataset");
        std::set<std::string> ids;
        for (const auto& g : grids) {
            g.validate();
            if (!ids.insert(g.image_id).second)
                throw ValidationError("duplicate image id '" + g.image_id + "'");
        }
        std::set<std::string> mask_ids;
        for (const auto& m : masks) {
            m.validate();
            if (!mask_ids.insert(m.image_id).second)
                throw ValidationError("duplicate mask for image '" + m.image_id + "'");
            const TokenGrid* g = find_grid(m.image_id);
            if (g == nullptr)
                throw ValidationError("mask '" + m.image_id + "' has no token grid");
            if (g->orig_h != m.height || g->orig_w != m.width)
                throw ValidationError("mask '" + m.image_id + "' size differs from image size");
        }
        for (const auto& [id, label] : image_classes) {
            if (!ids.contains(id))
                throw ValidationError("class map references unknown image '" + id + "'");
            if (label < 0 || static_cast<std::size_t>(label) >= class_names.size())
                throw ValidationError("image '" + id + "' has class id out of range");
        }
        for (const auto& [id, path] : image_paths)
            if (!ids.contains(id))
                throw ValidationError("path map references unknown image '" + id + "'");
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// One payload entry as described by the manifest.
struct EntryInfo {
    std::string name;
    std::vector<std::size_t> shape;
    std::string element_type;  // "f32" or "u8"
    std::uint64_t byte_offset = 0;
    std::uint64_t byte_length = 0;
    std::uint32_t checksum = 0;

    friend bool operator==(const EntryInfo&, const EntryInfo&) = default;
};

struct ContainerManifest {
    std::uint32_t format_version = kFormatVersion;
    std::vector<EntryInfo> entries;
    json metadata;  // manifest body without the entry table
};

namespace detail {

inline std::size_t element_size(std::string_view type) {
    if (type == "f32") return 4;
    if (type == "u8") return 1;
    throw FormatError("unknown element type '" + std::string(type) + "'");
}

inline void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

inline void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(std::span<const std::byte> in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(std::span<const std::byte> in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    return v;
}

inline std::vector<std::byte> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::byte> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
        throw IoError("failed reading '" + path.string() + "'");
    return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace detail

/// Accumulates payload entries and serializes a complete container image.
class ContainerWriter {
public:
    void add_f32(const std::string& name, std::vector<std::size_t> shape, std::span<const float> values) {
        const std::size_t begin = payload_.size();
        for (float v : values) detail::put_u32(payload_, std::bit_cast<std::uint32_t>(v));
        finish_entry(name, std::move(shape), "f32", begin);
    }

    void add_u8(const std::string& name, std::vector<std::size_t> shape, std::span<const std::uint8_t> values) {
        const std::size_t begin = payload_.size();
        for (auto v : values) payload_.push_back(static_cast<std::byte>(v));
        finish_entry(name, std::move(shape), "u8", begin);
    }

    /// Serializes header, manifest (metadata plus entry table), and payload.
    std::vector<std::byte> serialize(std::string_view magic, json metadata) const {
        metadata["format_version"] = kFormatVersion;
        metadata["payload_bytes"] = payload_.size();
        json table = json::array();
        for (const auto& e : entries_) {
            table.push_back({{"name", e.name},
                             {"shape", e.shape},
                             {"element_type", e.element_type},
                             {"byte_offset", e.byte_offset},
                             {"byte_length", e.byte_length},
                             {"checksum", e.checksum}});
        }
        metadata["entries"] = std::move(table);
        const std::string manifest = metadata.dump();

        std::vector<std::byte> out;
        out.reserve(kHeaderSize + manifest.size() + payload_.size());
        for (char c : magic) out.push_back(static_cast<std::byte>(c));
        detail::put_u32(out, kFormatVersion);
        detail::put_u64(out, manifest.size());
        detail::put_u32(out, crc32_of(manifest));
        for (char c : manifest) out.push_back(static_cast<std::byte>(c));
        out.insert(out.end(), payload_.begin(), payload_.end());
        return out;
    }

    void write(const std::filesystem::path& path, std::string_view magic, json metadata) const {
        const auto bytes = serialize(magic, std::move(metadata));
        detail::write_file(path, bytes);
    }

private:
    void finish_entry(const std::string& name, std::vector<std::size_t> shape, std::string type,
                      std::size_t begin) {
        EntryInfo e;
        e.name = name;
        e.shape = std::move(shape);
        e.element_type = std::move(type);
        e.byte_offset = begin;
        e.byte_length = payload_.size() - begin;
        e.checksum = crc32_of(std::span<const std::byte>(payload_).subspan(begin));
        entries_.push_back(std::move(e));
    }

    std::vector<std::byte> payload_;
    std::vector<EntryInfo> entries_;
};

/// A fully verified container held in memory.
class ContainerReader {
public:
    /// Parses and verifies everything up front: version, manifest CRC, size, and
    /// every entry checksum. Nothing is handed out from a file that fails.
    ContainerReader(std::vector<std::byte> bytes, std::string_view magic, const std::string& source)
        : bytes_(std::move(bytes)) {
        const std::span<const std::byte> all(bytes_);
        if (all.size() < kHeaderSize) {
            if (all.size() >= 4 && !magic_matches(all, magic))
                throw FormatError(source + ": bad magic bytes");
            throw TruncatedError(source + ": truncated header");
        }
        if (!magic_matches(all, magic)) throw FormatError(source + ": bad magic bytes");
        manifest_.format_version = detail::get_u32(all.subspan(4));
        if (manifest_.format_version != kFormatVersion)
            throw VersionError(source + ": unsupported format version " +
                               std::to_string(manifest_.format_version) + " (expected " +
                               std::to_string(kFormatVersion) + ")");
        const std::uint64_t manifest_len = detail::get_u64(all.subspan(8));
        const std::uint32_t manifest_crc = detail::get_u32(all.subspan(16));
        if (manifest_len > all.size() - kHeaderSize)
            throw TruncatedError(source + ": truncated manifest");
        const auto manifest_bytes = all.subspan(kHeaderSize, manifest_len);
        if (crc32_of(manifest_bytes) != manifest_crc)
            throw ChecksumError("manifest", source + ": checksum mismatch in manifest");

        json body;
        try {
            body = json::parse(reinterpret_cast<const char*>(manifest_bytes.data()),
                               reinterpret_cast<const char*>(manifest_bytes.data()) + manifest_bytes.size());
        } catch (const json::exception& e) {
            throw FormatError(source + ": unreadable manifest: " + e.what());
        }
        try {
            if (body.at("format_version").get<std::uint32_t>() != manifest_.format_version)
                throw VersionError(source + ": manifest version disagrees with header");
            const auto payload_bytes = body.at("payload_bytes").get<std::uint64_t>();
            payload_offset_ = kHeaderSize + manifest_len;
            const std::uint64_t available = all.size() - payload_offset_;
            if (available < payload_bytes)
                throw TruncatedError(source + ": truncated payload (" + std::to_string(available) + " of " +
                                     std::to_string(payload_bytes) + " bytes)");
            if (available > payload_bytes) throw FormatError(source + ": trailing bytes after payload");

            for (const auto& e : body.at("entries")) {
                EntryInfo info;
                info.name = e.at("name").get<std::string>();
                info.shape = e.at("shape").get<std::vector<std::size_t>>();
                info.element_type = e.at("element_type").get<std::string>();
                info.byte_offset = e.at("byte_offset").get<std::uint64_t>();
                info.byte_length = e.at("byte_length").get<std::uint64_t>();
                info.checksum = e.at("checksum").get<std::uint32_t>();
                manifest_.entries.push_back(std::move(info));
            }
            body.erase("entries");
            body.erase("payload_bytes");
            body.erase("format_version");
            manifest_.metadata = std::move(body);
            verify_layout(payload_bytes, source);
        } catch (const json::exception& e) {
            throw FormatError(source + ": malformed manifest: " + e.what());
        }
        for (const auto& e : manifest_.entries) {
            if (crc32_of(payload(e)) != e.checksum)
                throw ChecksumError(e.name, source + ": checksum mismatch in entry '" + e.name + "'");
        }
    }

    static ContainerReader open(const std::filesystem::path& path, std::string_view magic) {
        return ContainerReader(detail::read_file(path), magic, path.string());
    }

    const ContainerManifest& manifest() const noexcept { return manifest_; }
    const json& metadata() const noexcept { return manifest_.metadata; }

    const EntryInfo& entry(const std::string& name) const {
        for (const auto& e : manifest_.entries)
            if (e.name == name) return e;
        throw FormatError("missing entry '" + name + "'");
    }

    std::vector<float> f32(const std::string& name, const std::vector<std::size_t>& expected_shape) const {
        const EntryInfo& e = checked(name, "f32", expected_shape);
        const auto bytes = payload(e);
        std::vector<float> out(bytes.size() / 4);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = std::bit_cast<float>(detail::get_u32(bytes.subspan(4 * i)));
        return out;
    }

    std::vector<std::uint8_t> u8(const std::string& name, const std::vector<std::size_t>& expected_shape) const {
        const EntryInfo& e = checked(name, "u8", expected_shape);
        const auto bytes = payload(e);
        std::vector<std::uint8_t> out(bytes.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(bytes[i]);
        return out;
    }

private:
    static bool magic_matches(std::span<const std::byte> all, std::string_view magic) {
        for (std::size_t i = 0; i < magic.size(); ++i)
            if (static_cast<char>(all[i]) != magic[i]) return false;
        return true;
    }

    std::span<const std::byte> payload(const EntryInfo& e) const {
        return std::span<const std::byte>(bytes_).subspan(payload_offset_ + e.byte_offset, e.byte_length);
    }

    const EntryInfo& checked(const std::string& name, std::string_view type,
                             const std::vector<std::size_t>& expected_shape) const {
        const EntryInfo& e = entry(name);
        if (e.element_type != type)
            throw FormatError("entry '" + name + "' has element type " + e.element_type);
        if (e.shape != expected_shape) throw FormatError("entry '" + name + "' has unexpected shape");
        return e;
    }

    void verify_layout(std::uint64_t payload_bytes, const std::string& source) const {
        std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
        std::set<std::string> names;
        for (const auto& e : manifest_.entries) {
            if (!names.insert(e.name).second) throw FormatError(source + ": duplicate entry '" + e.name + "'");
            std::uint64_t count = 1;
            for (auto d : e.shape) count *= d;
            if (count * detail::element_size(e.element_type) != e.byte_length)
                throw FormatError(source + ": entry '" + e.name + "' shape does not match its byte length");
            if (e.byte_offset > payload_bytes || e.byte_length > payload_bytes - e.byte_offset)
                throw FormatError(source + ": entry '" + e.name + "' lies outside the payload");
            spans.emplace_back(e.byte_offset, e.byte_length);
        }
        std::sort(spans.begin(), spans.end());
        for (std::size_t i = 1; i < spans.size(); ++i)
            if (spans[i - 1].first + spans[i - 1].second > spans[i].first)
                throw FormatError(source + ": overlapping entries");
    }

    std::vector<std::byte> bytes_;
    ContainerManifest manifest_;
    std::uint64_t payload_offset_ = 0;
};

// Dataset containers -------------------------------------------------------

inline std::vector<std::byte> serialize_dataset(const Dataset& ds) {
    ds.validate();
    ContainerWriter writer;
    json grids = json::array();
    for (std::size_t i = 0; i < ds.grids.size(); ++i) {
        const auto& g = ds.grids[i];
        const std::string base = "grid/" + std::to_string(i);
        writer.add_f32(base + "/tokens", {g.grid_h, g.grid_w, g.dim}, g.tokens);
        json meta = {{"image_id", g.image_id}, {"grid_h", g.grid_h}, {"grid_w", g.grid_w},
                     {"dim", g.dim},           {"orig_h", g.orig_h}, {"orig_w", g.orig_w},
                     {"patch_size", g.patch_size}, {"tokens", base + "/tokens"}, {"cls", nullptr}};
        if (g.cls_vector) {
            writer.add_f32(base + "/cls", {g.dim}, *g.cls_vector);
            meta["cls"] = base + "/cls";
        }
        grids.push_back(std::move(meta));
    }
    json masks = json::array();
    for (std::size_t i = 0; i < ds.masks.size(); ++i) {
        const auto& m = ds.masks[i];
        const std::string name = "mask/" + std::to_string(i);
        writer.add_u8(name, {m.height, m.width}, m.values);
        masks.push_back({{"image_id", m.image_id}, {"height", m.height}, {"width", m.width}, {"values", name}});
    }
    json meta = {{"kind", "dataset"},
                 {"dataset",
                  {{"dataset_id", ds.dataset_id},
                   {"encoder_id", ds.encoder_id},
                   {"class_names", ds.class_names},
                   {"image_classes", ds.image_classes},
                   {"image_paths", ds.image_paths}}},
                 {"grids", std::move(grids)},
                 {"masks", std::move(masks)}};
    return writer.serialize(kDatasetMagic, std::move(meta));
}

/// Validates and writes a dataset. Nothing is written if validation fails.
inline void write_container(const Dataset& ds, const std::filesystem::path& path) {
    const auto bytes = serialize_dataset(ds);
    detail::write_file(path, bytes);
}

inline Dataset parse_dataset(const ContainerReader& reader, const std::string& source) {
    const json& meta = reader.metadata();
    Dataset ds;
    try {
        if (meta.at("kind").get<std::string>() != "dataset")
            throw FormatError(source + ": not a dataset container");
        const json& d = meta.at("dataset");
        ds.dataset_id = d.at("dataset_id").get<std::string>();
        ds.encoder_id = d.at("encoder_id").get<std::string>();
        ds.class_names = d.at("class_names").get<std::vector<std::string>>();
        ds.image_classes = d.at("image_classes").get<std::map<std::string, int>>();
        ds.image_paths = d.at("image_paths").get<std::map<std::string, std::string>>();
        for (const auto& gm : meta.at("grids")) {
            TokenGrid g;
            g.image_id = gm.at("image_id").get<std::string>();
            g.grid_h = gm.at("grid_h").get<std::size_t>();
            g.grid_w = gm.at("grid_w").get<std::size_t>();
            g.dim = gm.at("dim").get<std::size_t>();
            g.orig_h = gm.at("orig_h").get<std::size_t>();
            g.orig_w = gm.at("orig_w").get<std::size_t>();
            g.patch_size = gm.at("patch_size").get<std::size_t>();
            g.tokens = reader.f32(gm.at("tokens").get<std::string>(), {g.grid_h, g.grid_w, g.dim});
            if (!gm.at("cls").is_null()) g.cls_vector = reader.f32(gm.at("cls").get<std::string>(), {g.dim});
            ds.grids.push_back(std::move(g));
        }
        for (const auto& mm : meta.at("masks")) {
            ForegroundMask m;
            m.image_id = mm.at("image_id").get<std::string>();
            m.height = mm.at("height").get<std::size_t>();
            m.width = mm.at("width").get<std::size_t>();
            m.values = reader.u8(mm.at("values").get<std::string>(), {m.height, m.width});
            ds.masks.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw FormatError(source + ": malformed dataset manifest: " + e.what());
    }
    ds.validate();
    return ds;
}

struct LoadedContainer {
    Dataset dataset;
    ContainerManifest manifest;
};

inline LoadedContainer read_container(const std::filesystem::path& path) {
    const auto reader = ContainerReader::open(path, kDatasetMagic);
    return {parse_dataset(reader, path.string()), reader.manifest()};
}

inline Dataset load_dataset(const std::filesystem::path& path) { return read_container(path).dataset; }

}  // namespace kcc
