#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "turn/core.hpp"
#include "turn/metrics.hpp"

namespace turn {

// Proposal files are JSON lines — {"video_id", "start_s", "end_s", "score"}
// plus an optional "label" — sorted by video id, then descending score.

inline void write_proposals(const std::filesystem::path& path, std::vector<Proposal> props) {
    std::sort(props.begin(), props.end(), [](const Proposal& a, const Proposal& b) {
        if (a.video_id != b.video_id) return a.video_id < b.video_id;
        return detail::score_order(a, b);
    });
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw error(errc::io, "cannot open for write: " + path.string());
    for (const Proposal& p : props) {
        nlohmann::json j{{"video_id", p.video_id},
                         {"start_s", p.span.start_s},
                         {"end_s", p.span.end_s},
                         {"score", p.score}};
        if (!p.label.empty()) j["label"] = p.label;
        os << j.dump() << '\n';
    }
    if (!os) throw error(errc::io, "failed writing: " + path.string());
}

inline std::vector<Proposal> read_proposals(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw error(errc::io, "cannot open proposals: " + path.string());
    std::vector<Proposal> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fail = [&](const std::string& what) {
            throw error(errc::format,
                        path.string() + ":" + std::to_string(lineno) + ": " + what);
        };
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(std::string("bad JSON: ") + e.what());
        }
        if (!j.is_object()) fail("proposal line is not an object");
        Proposal p;
        for (const auto& [key, val] : j.items()) {
            if (key == "video_id" && val.is_string())
                p.video_id = val.get<std::string>();
            else if (key == "start_s" && val.is_number())
                p.span.start_s = val.get<double>();
            else if (key == "end_s" && val.is_number())
                p.span.end_s = val.get<double>();
            else if (key == "score" && val.is_number())
                p.score = val.get<double>();
            else if (key == "label" && val.is_string())
                p.label = val.get<std::string>();
            else
                fail("unknown or mistyped key: " + key);
        }
        if (p.video_id.empty()) fail("missing video_id");
        if (!j.contains("start_s") || !j.contains("end_s") || !j.contains("score"))
            fail("missing start_s/end_s/score");
        if (!p.span.valid()) fail("invalid span (start_s must be < end_s)");
        if (!std::isfinite(p.score) || p.score < 0.0 || p.score > 1.0)
            fail("score must be finite and in [0,1]");
        out.push_back(std::move(p));
    }
    return out;
}

// Curve CSVs carry a two-column header and 6-significant-digit values.
inline void write_curve_csv(const std::filesystem::path& path,
                            const std::vector<CurvePoint>& points,
                            const std::string& x_name, const std::string& y_name) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw error(errc::io, "cannot open for write: " + path.string());
    os << x_name << ',' << y_name << '\n';
    char buf[64];
    for (const CurvePoint& p : points) {
        std::snprintf(buf, sizeof buf, "%.6g,%.6g\n", p.x, p.y);
        os << buf;
    }
    if (!os) throw error(errc::io, "failed writing: " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw error(errc::io, "cannot open for write: " + path.string());
    os << j.dump(2) << '\n';
    if (!os) throw error(errc::io, "failed writing: " + path.string());
}

} // namespace turn
