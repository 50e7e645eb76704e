#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "turn/core.hpp"
#include "turn/featurestore.hpp"

namespace turn {

using ProposalsByVideo = std::map<std::string, std::vector<Proposal>>;
using GtsByVideo = std::map<std::string, std::vector<GroundTruth>>;
using VideoLengths = std::map<std::string, double>; // seconds; defines the video universe

struct RetrievalRule {
    enum class Kind { top_n, frequency, ratio } kind = Kind::top_n;
    double value = 0.0; // N, F (proposals/second), or rho

    static RetrievalRule top_n(double n) { return {Kind::top_n, n}; }
    static RetrievalRule frequency(double f) { return {Kind::frequency, f}; }
    static RetrievalRule ratio(double r) { return {Kind::ratio, r}; }

    void validate() const {
        if (value < 0.0) throw error(errc::config, "retrieval level must be non-negative");
        if (kind == Kind::ratio && (value <= 0.0 || value > 1.0))
            throw error(errc::config, "retrieval ratio must be in (0,1]");
    }
};

struct CurvePoint {
    double x = 0.0, y = 0.0;
};

inline std::vector<double> ar_default_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 10; ++i) g.push_back(static_cast<double>(10 + i) / 20.0);
    return g;
}

namespace detail {
inline bool score_order(const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.span.start_s != b.span.start_s) return a.span.start_s < b.span.start_s;
    return a.span.length() > b.span.length();
}
} // namespace detail

inline ProposalsByVideo group_by_video(const std::vector<Proposal>& props) {
    ProposalsByVideo by;
    for (const Proposal& p : props) by[p.video_id].push_back(p);
    for (auto& [vid, list] : by) std::sort(list.begin(), list.end(), detail::score_order);
    return by;
}

inline GtsByVideo gts_from_annotations(const AnnotationSet& anns) {
    GtsByVideo by;
    for (const auto& [vid, va] : anns) by[vid] = va.actions;
    return by;
}

inline VideoLengths lengths_from_annotations(const AnnotationSet& anns) {
    VideoLengths ls;
    for (const auto& [vid, va] : anns) ls[vid] = va.duration_s;
    return ls;
}

// Per-video retention counts:
//   TopN      — min(N, available)
//   Frequency — min(max(1, round(F*l_i)), available), zero when F = 0
//   Ratio     — round(rho * Phi_i) where Phi_i is the video's proposal count
inline ProposalsByVideo retrieve(const ProposalsByVideo& props, const RetrievalRule& rule,
                                 const VideoLengths& lengths) {
    rule.validate();
    ProposalsByVideo out;
    for (const auto& [vid, list_in] : props) {
        std::vector<Proposal> list = list_in;
        std::sort(list.begin(), list.end(), detail::score_order);
        std::int64_t avail = static_cast<std::int64_t>(list.size());
        std::int64_t keep = 0;
        switch (rule.kind) {
            case RetrievalRule::Kind::top_n:
                keep = std::min<std::int64_t>(std::llround(rule.value), avail);
                break;
            case RetrievalRule::Kind::frequency: {
                auto it = lengths.find(vid);
                if (it == lengths.end())
                    throw error(errc::data, "no video length for " + vid);
                keep = rule.value == 0.0
                           ? 0
                           : std::min<std::int64_t>(
                                 std::max<std::int64_t>(1, std::llround(rule.value * it->second)),
                                 avail);
                break;
            }
            case RetrievalRule::Kind::ratio:
                keep = std::llround(rule.value * static_cast<double>(avail));
                break;
        }
        keep = std::max<std::int64_t>(0, keep);
        list.resize(static_cast<std::size_t>(keep));
        out[vid] = std::move(list);
    }
    return out;
}

// Fraction of GTs covered by some same-video retained proposal at tIoU >= thr.
inline double recall_at(const GtsByVideo& gts, const ProposalsByVideo& retained,
                        double tiou_threshold) {
    std::int64_t total = 0, matched = 0;
    for (const auto& [vid, glist] : gts) {
        auto it = retained.find(vid);
        for (const GroundTruth& g : glist) {
            ++total;
            if (it == retained.end()) continue;
            for (const Proposal& p : it->second) {
                if (tiou(p.span, g.span) >= tiou_threshold) {
                    ++matched;
                    break;
                }
            }
        }
    }
    if (total == 0) throw error(errc::data, "recall undefined: no ground truths");
    return static_cast<double>(matched) / static_cast<double>(total);
}

inline double average_recall(const GtsByVideo& gts, const ProposalsByVideo& retained,
                             const std::vector<double>& grid = ar_default_grid()) {
    if (grid.empty()) throw error(errc::config, "tIoU grid empty");
    double acc = 0.0;
    for (double t : grid) acc += recall_at(gts, retained, t);
    return acc / static_cast<double>(grid.size());
}

// One point per requested level. For the ratio family the reported x is the
// realized mean retained count per video (over the whole video universe), not rho.
inline std::vector<CurvePoint> ar_curve(const GtsByVideo& gts, const ProposalsByVideo& props,
                                        RetrievalRule::Kind family,
                                        const std::vector<double>& xs,
                                        const VideoLengths& lengths,
                                        const std::vector<double>& grid = ar_default_grid()) {
    if (lengths.empty()) throw error(errc::data, "empty video universe");
    std::vector<CurvePoint> curve;
    for (double x : xs) {
        RetrievalRule rule{family, x};
        ProposalsByVideo retained = retrieve(props, rule, lengths);
        double y = average_recall(gts, retained, grid);
        double x_out = x;
        if (family == RetrievalRule::Kind::ratio) {
            std::int64_t kept = 0;
            for (const auto& [vid, list] : retained)
                kept += static_cast<std::int64_t>(list.size());
            x_out = static_cast<double>(kept) / static_cast<double>(lengths.size());
        }
        curve.push_back({x_out, y});
    }
    return curve;
}

inline std::vector<CurvePoint> recall_x_tiou(const GtsByVideo& gts,
                                             const ProposalsByVideo& props,
                                             const RetrievalRule& rule,
                                             const VideoLengths& lengths,
                                             const std::vector<double>& tiou_grid) {
    if (tiou_grid.empty()) throw error(errc::config, "tIoU grid empty");
    ProposalsByVideo retained = retrieve(props, rule, lengths);
    std::vector<CurvePoint> curve;
    for (double t : tiou_grid) curve.push_back({t, recall_at(gts, retained, t)});
    return curve;
}

// Class-aware detection mAP. Per class: detections sorted by descending score,
// each greedily matched to the unmatched same-video GT of highest tIoU >= thr;
// AP is the all-points (uninterpolated) area under precision-recall; mAP
// averages classes that have at least one GT.
inline double detection_map(const std::vector<Proposal>& detections,
                            const GtsByVideo& gts, double tiou_threshold) {
    std::map<std::string, std::int64_t> gt_count;
    for (const auto& [vid, glist] : gts)
        for (const GroundTruth& g : glist) ++gt_count[g.label];
    if (gt_count.empty()) throw error(errc::data, "detection mAP undefined: no ground truths");

    double ap_sum = 0.0;
    for (const auto& [cls, n_gt] : gt_count) {
        std::vector<Proposal> dets;
        for (const Proposal& d : detections)
            if (d.label == cls) dets.push_back(d);
        std::sort(dets.begin(), dets.end(), [](const Proposal& a, const Proposal& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.video_id != b.video_id) return a.video_id < b.video_id;
            if (a.span.start_s != b.span.start_s) return a.span.start_s < b.span.start_s;
            return a.span.length() > b.span.length();
        });
        std::map<std::string, std::vector<char>> used;
        for (const auto& [vid, glist] : gts)
            used[vid].assign(glist.size(), 0);
        std::int64_t tp = 0, fp = 0;
        double ap = 0.0, prev_recall = 0.0;
        for (const Proposal& d : dets) {
            const std::vector<GroundTruth>* glist = nullptr;
            auto it = gts.find(d.video_id);
            if (it != gts.end()) glist = &it->second;
            std::int64_t best = -1;
            double best_iou = 0.0;
            if (glist) {
                auto& uflags = used[d.video_id];
                for (std::size_t g = 0; g < glist->size(); ++g) {
                    if ((*glist)[g].label != cls || uflags[g]) continue;
                    double v = tiou(d.span, (*glist)[g].span);
                    if (v >= tiou_threshold && (best < 0 || v > best_iou)) {
                        best_iou = v;
                        best = static_cast<std::int64_t>(g);
                    }
                }
            }
            if (best >= 0) {
                used[d.video_id][static_cast<std::size_t>(best)] = 1;
                ++tp;
            } else {
                ++fp;
            }
            double recall = static_cast<double>(tp) / static_cast<double>(n_gt);
            double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        ap_sum += ap;
    }
    return ap_sum / static_cast<double>(gt_count.size());
}

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw error(errc::data, "pearson needs two equal-length series of length >= 2");
    double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw error(errc::data, "pearson undefined: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

} // namespace turn
