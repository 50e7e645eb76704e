#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "turn/core.hpp"
#include "turn/featurestore.hpp"
#include "turn/model.hpp"
#include "turn/rng.hpp"
#include "turn/sampling.hpp"

namespace turn {

struct RawScoredClip {
    UnitInterval clip;
    double action_prob = 0.0;
    double o_s = 0.0, o_e = 0.0;
};

// Invert the offset definition: s' = s - o_s, e' = e - o_e, rounded to the
// nearest unit (half away from zero), clamped to [0, units]. A candidate whose
// refined span collapses (s' >= e') is rejected, not passed through unrefined.
inline std::optional<UnitInterval> refine(const UnitInterval& clip, double o_s, double o_e,
                                          std::int64_t units) {
    std::int64_t s = std::llround(static_cast<double>(clip.start) - o_s);
    std::int64_t e = std::llround(static_cast<double>(clip.end) - o_e);
    s = std::clamp<std::int64_t>(s, 0, units);
    e = std::clamp<std::int64_t>(e, 0, units);
    if (s >= e) return std::nullopt;
    return UnitInterval{s, e};
}

// Greedy NMS: keep the highest-scored remaining proposal, discard remaining
// proposals with tIoU strictly above the threshold against it. Ties broken by
// earlier start, then longer span. Output is the keep order (descending score).
inline std::vector<Proposal> nms(std::vector<Proposal> props, double threshold) {
    std::sort(props.begin(), props.end(), [](const Proposal& a, const Proposal& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.span.start_s != b.span.start_s) return a.span.start_s < b.span.start_s;
        return a.span.length() > b.span.length();
    });
    std::vector<Proposal> kept;
    std::vector<char> dead(props.size(), 0);
    for (std::size_t i = 0; i < props.size(); ++i) {
        if (dead[i]) continue;
        kept.push_back(props[i]);
        for (std::size_t j = i + 1; j < props.size(); ++j)
            if (!dead[j] && tiou(props[i].span, props[j].span) > threshold) dead[j] = 1;
    }
    return kept;
}

// Score every pyramid candidate of one video in batched chunks.
inline std::vector<RawScoredClip> score_clips(const ModelParams& params,
                                              const VideoRecord& rec,
                                              const PyramidConfig& pyramid,
                                              std::int64_t chunk = 1024) {
    pyramid.validate();
    if (rec.dim != params.cfg.dim)
        throw error(errc::config, "feature dim does not match model dim");
    auto cands = build_pyramid(rec.units, pyramid);
    std::vector<RawScoredClip> out;
    if (cands.empty()) return out;
    out.reserve(cands.size());
    Eigen::MatrixXd X(params.cfg.input_dim(),
                      std::min<std::int64_t>(chunk, static_cast<std::int64_t>(cands.size())));
    ForwardCache cache;
    for (std::size_t base = 0; base < cands.size(); base += static_cast<std::size_t>(chunk)) {
        std::size_t n = std::min(static_cast<std::size_t>(chunk), cands.size() - base);
        for (std::size_t i = 0; i < n; ++i)
            clip_feature_into(rec, cands[base + i].clip, pyramid.n_ctx, pyramid.use_context,
                              X.col(static_cast<Eigen::Index>(i)).data());
        forward(params, X.leftCols(static_cast<Eigen::Index>(n)), cache);
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Index c = static_cast<Eigen::Index>(i);
            out.push_back({cands[base + i].clip, cache.P(1, c), cache.O(0, c), cache.O(1, c)});
        }
    }
    return out;
}

struct ProposeOptions {
    double nms_threshold = 0.5;
    bool apply_regression = true; // false = the "cls only" ablation (raw clip boundaries)
};

inline std::vector<Proposal> propose(const ModelParams& params, const FeatureStore& store,
                                     const std::string& video_id,
                                     const PyramidConfig& pyramid,
                                     const ProposeOptions& opt = {}) {
    const VideoRecord& rec = store.at(video_id);
    std::vector<Proposal> raw;
    for (const RawScoredClip& sc : score_clips(params, rec, pyramid)) {
        std::optional<UnitInterval> span = opt.apply_regression
                                               ? refine(sc.clip, sc.o_s, sc.o_e, rec.units)
                                               : std::optional<UnitInterval>(sc.clip);
        if (!span) continue;
        raw.push_back(
            {video_id, units_to_seconds(*span, rec.unit_frames, rec.fps), sc.action_prob, {}});
    }
    return nms(std::move(raw), opt.nms_threshold);
}

// Fixed-length windows in frames, stride max(1, round(w*(1-overlap))) frames,
// kept only while fully inside the video; each window draws an independent
// uniform(0,1) score.
inline std::vector<Proposal> sliding_window_baseline(const VideoRecord& rec,
                                                     const std::vector<std::int64_t>& window_frames,
                                                     double overlap, Rng& rng) {
    if (overlap < 0.0 || overlap >= 1.0)
        throw error(errc::config, "sliding-window overlap must be in [0,1)");
    std::vector<Proposal> out;
    std::int64_t total_frames = rec.units * rec.unit_frames;
    for (std::int64_t w : window_frames) {
        if (w < 1) throw error(errc::config, "sliding-window length must be positive");
        std::int64_t stride =
            std::max<std::int64_t>(1, std::llround(static_cast<double>(w) * (1.0 - overlap)));
        for (std::int64_t f = 0; f + w <= total_frames; f += stride) {
            SecondsInterval span{static_cast<double>(f) / rec.fps,
                                 static_cast<double>(f + w) / rec.fps};
            out.push_back({rec.video_id, span, rng.uniform01(), {}});
        }
    }
    return out;
}

// Uniform random segments: endpoints drawn in [0, duration], swapped so
// start < end, redrawn on exact equality; uniform random scores.
inline std::vector<Proposal> random_baseline(const VideoRecord& rec, std::int64_t count,
                                             Rng& rng) {
    if (count < 0) throw error(errc::config, "random-baseline count must be non-negative");
    std::vector<Proposal> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        double a = 0.0, b = 0.0;
        do {
            a = rng.uniform(0.0, rec.duration_s);
            b = rng.uniform(0.0, rec.duration_s);
        } while (a == b);
        if (a > b) std::swap(a, b);
        out.push_back({rec.video_id, {a, b}, rng.uniform01(), {}});
    }
    return out;
}

} // namespace turn
