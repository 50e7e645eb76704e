#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "turn/core.hpp"

namespace turn {

// One video's unit features (U rows of D float32 components, as stored on disk)
// plus f64 prefix sums so every pooled mean is O(D) regardless of span length.
// Rows are ingested exactly once per video; all clip features reuse them.
struct VideoRecord {
    std::string video_id;
    double duration_s = 0.0;
    double fps = 0.0;
    std::int64_t unit_frames = 0;
    std::int64_t units = 0; // U
    std::int64_t dim = 0;   // D
    std::vector<float> unit_features;   // U*D row-major
    std::vector<double> prefix;         // (U+1)*D, prefix[0,:] = 0

    double unit_seconds() const { return static_cast<double>(unit_frames) / fps; }

    void build_prefix() {
        prefix.assign(static_cast<std::size_t>(units + 1) * dim, 0.0);
        for (std::int64_t u = 0; u < units; ++u) {
            const float* row = unit_features.data() + u * dim;
            const double* prev = prefix.data() + u * dim;
            double* cur = prefix.data() + (u + 1) * dim;
            for (std::int64_t d = 0; d < dim; ++d) cur[d] = prev[d] + row[d];
        }
        ++prefix_builds; // exposes the "each row ingested once" reuse property to tests
    }

    static inline std::size_t prefix_builds = 0;
};

struct FeatureStore {
    std::int64_t dim = 0;
    std::int64_t unit_frames = 0;
    std::map<std::string, VideoRecord> videos; // ordered: deterministic iteration

    const VideoRecord& at(const std::string& id) const {
        auto it = videos.find(id);
        if (it == videos.end()) throw error(errc::io, "unknown video id: " + id);
        return it->second;
    }
};

// Component-wise mean of unit-feature rows in `range` clamped to [0, U);
// empty after clamping -> all-zero vector.
inline std::vector<double> mean_pool(const VideoRecord& rec, UnitInterval range) {
    std::vector<double> out(static_cast<std::size_t>(rec.dim), 0.0);
    std::int64_t s = std::max<std::int64_t>(range.start, 0);
    std::int64_t e = std::min<std::int64_t>(range.end, rec.units);
    if (s >= e) return out;
    const double* ps = rec.prefix.data() + s * rec.dim;
    const double* pe = rec.prefix.data() + e * rec.dim;
    double inv = 1.0 / static_cast<double>(e - s);
    for (std::int64_t d = 0; d < rec.dim; ++d) out[d] = (pe[d] - ps[d]) * inv;
    return out;
}

// f_c = < pool(before-context) || pool(internal) || pool(after-context) >, 3*D wide.
// use_context=false zeroes both context blocks (the "no context" ablation; n_ctx
// itself stays positive per the config contract).
inline void clip_feature_into(const VideoRecord& rec, UnitInterval clip, std::int64_t n_ctx,
                              bool use_context, double* out) {
    auto write_pool = [&](std::int64_t s, std::int64_t e, double* dst) {
        s = std::max<std::int64_t>(s, 0);
        e = std::min<std::int64_t>(e, rec.units);
        if (s >= e) {
            std::fill(dst, dst + rec.dim, 0.0);
            return;
        }
        const double* ps = rec.prefix.data() + s * rec.dim;
        const double* pe = rec.prefix.data() + e * rec.dim;
        double inv = 1.0 / static_cast<double>(e - s);
        for (std::int64_t d = 0; d < rec.dim; ++d) dst[d] = (pe[d] - ps[d]) * inv;
    };
    if (!clip.valid() || clip.end > rec.units)
        throw error(errc::internal, "clip outside video: " + rec.video_id);
    if (use_context)
        write_pool(clip.start - n_ctx, clip.start, out);
    else
        std::fill(out, out + rec.dim, 0.0);
    write_pool(clip.start, clip.end, out + rec.dim);
    if (use_context)
        write_pool(clip.end, clip.end + n_ctx, out + 2 * rec.dim);
    else
        std::fill(out + 2 * rec.dim, out + 3 * rec.dim, 0.0);
}

inline std::vector<double> clip_feature(const VideoRecord& rec, UnitInterval clip,
                                        std::int64_t n_ctx, bool use_context = true) {
    std::vector<double> out(static_cast<std::size_t>(3 * rec.dim));
    clip_feature_into(rec, clip, n_ctx, use_context, out.data());
    return out;
}

// ---- TRNF binary format ----------------------------------------------------
// magic "TRNF" | u32 LE version (=1) | u32 LE D | u32 LE U | U*D f32 LE row-major

namespace trnf {

inline constexpr char magic[4] = {'T', 'R', 'N', 'F'};
inline constexpr std::uint32_t version = 1;

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write(const std::filesystem::path& path, std::uint32_t dim, std::uint32_t units,
                  const float* data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw error(errc::io, "cannot open for write: " + path.string());
    os.write(magic, 4);
    put_u32(os, version);
    put_u32(os, dim);
    put_u32(os, units);
    static_assert(sizeof(float) == 4);
    // float bytes are written as-is; this code assumes an IEEE-754 little-endian
    // host, which the build targets
    os.write(reinterpret_cast<const char*>(data),
             static_cast<std::streamsize>(sizeof(float) * dim * units));
    if (!os) throw error(errc::io, "short write: " + path.string());
}

struct Payload {
    std::uint32_t dim = 0;
    std::uint32_t units = 0;
    std::vector<float> data;
};

inline Payload read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw error(errc::io, "cannot open: " + path.string());
    char m[4];
    is.read(m, 4);
    if (!is || std::memcmp(m, magic, 4) != 0)
        throw error(errc::format, "bad magic at byte 0 in " + path.string());
    std::uint32_t ver = get_u32(is);
    if (!is || ver != version)
        throw error(errc::format,
                    "unsupported version " + std::to_string(ver) + " at byte 4 in " +
                        path.string());
    Payload p;
    p.dim = get_u32(is);
    p.units = get_u32(is);
    if (!is || p.dim == 0 || p.units == 0)
        throw error(errc::format, "bad dimensions at byte 8 in " + path.string());
    p.data.resize(static_cast<std::size_t>(p.dim) * p.units);
    is.read(reinterpret_cast<char*>(p.data.data()),
            static_cast<std::streamsize>(sizeof(float) * p.data.size()));
    if (static_cast<std::size_t>(is.gcount()) != sizeof(float) * p.data.size())
        throw error(errc::format,
                    "truncated payload at byte " + std::to_string(16 + is.gcount()) + " in " +
                        path.string());
    for (std::size_t i = 0; i < p.data.size(); ++i)
        if (!std::isfinite(p.data[i]))
            throw error(errc::format, "non-finite value at byte " +
                                          std::to_string(16 + 4 * i) + " in " + path.string());
    return p;
}

} // namespace trnf

// ---- manifest / annotations -------------------------------------------------

// Manifest: JSON array of {id, path, fps, total_frames, unit_frames};
// paths resolve relative to the manifest's directory.
inline FeatureStore load_store(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw error(errc::io, "cannot open manifest: " + manifest_path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw error(errc::format, "manifest parse error: " + std::string(e.what()));
    }
    if (!j.is_array()) throw error(errc::format, "manifest must be a JSON array");
    FeatureStore store;
    auto base = manifest_path.parent_path();
    for (const auto& entry : j) {
        VideoRecord rec;
        try {
            rec.video_id = entry.at("id").get<std::string>();
            rec.fps = entry.at("fps").get<double>();
            std::int64_t total_frames = entry.at("total_frames").get<std::int64_t>();
            rec.unit_frames = entry.at("unit_frames").get<std::int64_t>();
            rec.duration_s = static_cast<double>(total_frames) / rec.fps;
            if (rec.fps <= 0 || rec.unit_frames <= 0 || total_frames <= 0)
                throw error(errc::format, "non-positive video metadata for " + rec.video_id);
            auto payload = trnf::read(base / entry.at("path").get<std::string>());
            rec.dim = payload.dim;
            rec.units = payload.units;
            // tail frames not filling a whole unit are dropped by contract
            std::int64_t expected_units = total_frames / rec.unit_frames;
            if (expected_units != rec.units)
                throw error(errc::format, "video " + rec.video_id + ": manifest implies " +
                                              std::to_string(expected_units) +
                                              " units, file has " + std::to_string(rec.units));
            rec.unit_features = std::move(payload.data);
            rec.build_prefix();
        } catch (const nlohmann::json::exception& e) {
            throw error(errc::format, "manifest entry error: " + std::string(e.what()));
        }
        if (store.videos.count(rec.video_id))
            throw error(errc::format, "duplicate video id: " + rec.video_id);
        if (store.dim == 0) {
            store.dim = rec.dim;
            store.unit_frames = rec.unit_frames;
        } else if (store.dim != rec.dim) {
            throw error(errc::format, "video " + rec.video_id + ": feature dim " +
                                          std::to_string(rec.dim) + " != store dim " +
                                          std::to_string(store.dim));
        }
        store.videos.emplace(rec.video_id, std::move(rec));
    }
    return store;
}

struct VideoAnnotation {
    double duration_s = 0.0;
    double fps = 0.0;
    std::vector<GroundTruth> actions;
};

using AnnotationSet = std::map<std::string, VideoAnnotation>;

// Annotations: JSON array of {video_id, duration_s, fps, actions:[{start_s,end_s,label}]}.
inline AnnotationSet load_annotations(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw error(errc::io, "cannot open annotations: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw error(errc::format, "annotation parse error: " + std::string(e.what()));
    }
    if (!j.is_array()) throw error(errc::format, "annotations must be a JSON array");
    AnnotationSet out;
    for (const auto& entry : j) {
        try {
            std::string id = entry.at("video_id").get<std::string>();
            VideoAnnotation va;
            va.duration_s = entry.at("duration_s").get<double>();
            va.fps = entry.at("fps").get<double>();
            for (const auto& a : entry.at("actions")) {
                GroundTruth gt;
                gt.video_id = id;
                gt.span = {a.at("start_s").get<double>(), a.at("end_s").get<double>()};
                gt.label = a.at("label").get<std::string>();
                if (!gt.span.valid() || gt.label.empty())
                    throw error(errc::format, "invalid action span/label in " + id);
                va.actions.push_back(std::move(gt));
            }
            out.emplace(std::move(id), std::move(va));
        } catch (const nlohmann::json::exception& e) {
            throw error(errc::format, "annotation entry error: " + std::string(e.what()));
        }
    }
    return out;
}

inline void save_annotations(const std::filesystem::path& path, const AnnotationSet& anns) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [id, va] : anns) {
        nlohmann::json actions = nlohmann::json::array();
        for (const auto& a : va.actions)
            actions.push_back({{"start_s", a.span.start_s},
                               {"end_s", a.span.end_s},
                               {"label", a.label}});
        j.push_back({{"video_id", id},
                     {"duration_s", va.duration_s},
                     {"fps", va.fps},
                     {"actions", actions}});
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw error(errc::io, "cannot write: " + path.string());
    os << j.dump(2) << "\n";
}

} // namespace turn
