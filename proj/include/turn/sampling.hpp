#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "turn/core.hpp"
#include "turn/featurestore.hpp"
#include "turn/rng.hpp"

namespace turn {

struct PyramidConfig {
    std::vector<std::int64_t> scales = {1, 2, 4, 8, 16, 32};
    std::int64_t n_ctx = 4;
    bool use_context = true; // false = the "no context" ablation (context blocks zeroed)

    void validate() const {
        if (scales.empty()) throw error(errc::config, "pyramid scales empty");
        for (std::size_t i = 0; i < scales.size(); ++i) {
            if (scales[i] < 1) throw error(errc::config, "pyramid scale < 1");
            if (i && scales[i] <= scales[i - 1])
                throw error(errc::config, "pyramid scales must be strictly increasing");
        }
        if (n_ctx < 1) throw error(errc::config, "n_ctx must be positive");
    }
};

struct ClipCandidate {
    std::int64_t anchor = 0;
    std::int64_t scale = 0;
    UnitInterval clip;
};

enum class SampleLabel { positive, negative, ignored };

struct TrainingSample {
    std::string video_id;
    UnitInterval clip;
    SampleLabel label = SampleLabel::ignored;
    double target_os = 0.0; // meaningful iff positive
    double target_oe = 0.0;
    std::size_t matched_gt = 0; // index into the video's GT list, iff positive
};

// Start-anchored pyramid: clip [a, a+n) for every anchor a and scale n that fits.
// Emission order is anchor-major, scale-ascending (deterministic).
inline std::vector<ClipCandidate> build_pyramid(std::int64_t units, const PyramidConfig& cfg) {
    std::vector<ClipCandidate> out;
    for (std::int64_t a = 0; a < units; ++a)
        for (std::int64_t n : cfg.scales)
            if (a + n <= units) out.push_back({a, n, {a, a + n}});
    return out;
}

// Label rules:
//   positive  — best tIoU for some GT (overlap required; ties all positive), or
//               tIoU > 0.5 with some GT (strict);
//               regression targets o*_s = s_clip - s_gt, o*_e = e_clip - e_gt in
//               unit coordinates against the highest-tIoU GT (tie: earliest GT start)
//   negative  — tIoU exactly 0 with every GT
//   ignored   — everything else (excluded from training)
inline std::vector<TrainingSample> assign_labels(const std::vector<ClipCandidate>& clips,
                                                 const std::vector<GroundTruth>& gts,
                                                 const VideoRecord& rec) {
    const double units_per_s = rec.fps / static_cast<double>(rec.unit_frames);
    std::vector<std::vector<double>> iou(clips.size(), std::vector<double>(gts.size(), 0.0));
    std::vector<double> best_for_gt(gts.size(), 0.0);
    for (std::size_t c = 0; c < clips.size(); ++c) {
        SecondsInterval cs = units_to_seconds(clips[c].clip, rec.unit_frames, rec.fps);
        for (std::size_t g = 0; g < gts.size(); ++g) {
            iou[c][g] = tiou(cs, gts[g].span);
            best_for_gt[g] = std::max(best_for_gt[g], iou[c][g]);
        }
    }
    std::vector<TrainingSample> out;
    out.reserve(clips.size());
    for (std::size_t c = 0; c < clips.size(); ++c) {
        TrainingSample s;
        s.video_id = rec.video_id;
        s.clip = clips[c].clip;
        bool positive = false;
        bool all_zero = true;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (iou[c][g] > 0.0) all_zero = false;
            if (iou[c][g] > 0.5) positive = true;
            if (best_for_gt[g] > 0.0 && iou[c][g] == best_for_gt[g]) positive = true;
        }
        if (positive) {
            std::size_t best_g = 0;
            for (std::size_t g = 1; g < gts.size(); ++g) {
                if (iou[c][g] > iou[c][best_g] ||
                    (iou[c][g] == iou[c][best_g] &&
                     gts[g].span.start_s < gts[best_g].span.start_s))
                    best_g = g;
            }
            s.label = SampleLabel::positive;
            s.matched_gt = best_g;
            double gt_su = gts[best_g].span.start_s * units_per_s;
            double gt_eu = gts[best_g].span.end_s * units_per_s;
            s.target_os = static_cast<double>(s.clip.start) - gt_su;
            s.target_oe = static_cast<double>(s.clip.end) - gt_eu;
        } else if (all_zero) {
            s.label = SampleLabel::negative;
        } else {
            s.label = SampleLabel::ignored;
        }
        out.push_back(std::move(s));
    }
    return out;
}

// n_pos = round(batch/(bg_ratio+1)), at least 1; negatives fill the rest.
// A pool at least as large as its quota is sampled without replacement
// (partial Fisher-Yates); smaller pools are sampled with replacement.
inline std::vector<TrainingSample> sample_minibatch(const std::vector<TrainingSample>& pool,
                                                    std::int64_t batch_size,
                                                    std::int64_t bg_ratio, Rng& rng) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].label == SampleLabel::positive) pos.push_back(i);
        if (pool[i].label == SampleLabel::negative) neg.push_back(i);
    }
    if (pos.empty() || neg.empty())
        throw error(errc::data, "minibatch needs at least one positive and one negative");
    std::int64_t n_pos = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(batch_size) / static_cast<double>(bg_ratio + 1)));
    std::int64_t n_neg = batch_size - n_pos;

    auto draw = [&](std::vector<std::size_t>& ids, std::int64_t quota) {
        std::vector<std::size_t> picked;
        picked.reserve(static_cast<std::size_t>(quota));
        if (static_cast<std::int64_t>(ids.size()) >= quota) {
            for (std::int64_t k = 0; k < quota; ++k) {
                std::size_t j = k + rng.uniform_below(ids.size() - k);
                std::swap(ids[k], ids[j]);
                picked.push_back(ids[k]);
            }
        } else {
            for (std::int64_t k = 0; k < quota; ++k)
                picked.push_back(ids[rng.uniform_below(ids.size())]);
        }
        return picked;
    };
    std::vector<TrainingSample> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (std::size_t i : draw(pos, n_pos)) batch.push_back(pool[i]);
    for (std::size_t i : draw(neg, n_neg)) batch.push_back(pool[i]);
    return batch;
}

} // namespace turn
