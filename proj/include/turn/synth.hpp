#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "turn/core.hpp"
#include "turn/featurestore.hpp"
#include "turn/metrics.hpp"
#include "turn/proposer.hpp"
#include "turn/rng.hpp"

namespace turn {

struct SynthConfig {
    std::int64_t n_videos = 0;
    std::int64_t units_per_video = 256;
    std::int64_t feature_dim = 32;
    std::int64_t unit_frames = 16;
    double fps = 16.0;
    std::int64_t n_classes = 4;
    std::int64_t actions_min = 1;
    std::int64_t actions_max = 4;
    std::vector<std::int64_t> duration_scales = {2, 4, 8, 16, 32};
    double noise_sigma = 1.0;
    double signal_gain = 2.5;
    std::int64_t boundary_ramp_units = 1;
    std::uint64_t seed = 0;
    std::string id_prefix = "v";

    void validate() const {
        if (n_videos < 1) throw error(errc::config, "n_videos must be positive");
        if (units_per_video < 1) throw error(errc::config, "units_per_video must be positive");
        if (feature_dim < 1) throw error(errc::config, "feature_dim must be positive");
        if (unit_frames < 1) throw error(errc::config, "unit_frames must be positive");
        if (fps <= 0.0) throw error(errc::config, "fps must be positive");
        if (n_classes < 1 || n_classes > feature_dim)
            throw error(errc::config, "n_classes must be in [1, feature_dim]");
        if (actions_min < 1 || actions_max < actions_min)
            throw error(errc::config, "actions_per_video range invalid");
        if (duration_scales.empty())
            throw error(errc::config, "duration_scales empty");
        for (std::int64_t d : duration_scales)
            if (d < 1 || d > units_per_video)
                throw error(errc::config, "duration scale must fit inside units_per_video");
        if (noise_sigma <= 0.0) throw error(errc::config, "noise_sigma must be positive");
        if (signal_gain < 0.0) throw error(errc::config, "signal_gain must be non-negative");
        if (boundary_ramp_units < 0)
            throw error(errc::config, "boundary_ramp_units must be non-negative");
    }
};

namespace detail {
// Signal attenuation at depth d units from the nearer boundary.
inline double ramp_factor(std::int64_t d, std::int64_t ramp) {
    if (ramp <= 0 || d >= ramp) return 1.0;
    return (static_cast<double>(d) + 0.5) / static_cast<double>(ramp);
}

// Pairwise-orthonormal class directions, shared across the dataset.
inline std::vector<std::vector<double>> class_directions(const SynthConfig& cfg) {
    Rng rng(sub_seed(cfg.seed, "synth/classes"));
    std::vector<std::vector<double>> mus;
    for (std::int64_t k = 0; k < cfg.n_classes; ++k) {
        std::vector<double> v(static_cast<std::size_t>(cfg.feature_dim));
        while (true) {
            for (double& x : v) x = rng.normal(0.0, 1.0);
            for (const auto& u : mus) {
                double dot = 0.0;
                for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * u[i];
                for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * u[i];
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 1e-8) {
                for (double& x : v) x /= norm;
                break;
            }
        }
        mus.push_back(v);
    }
    return mus;
}
} // namespace detail

struct SynthDataset {
    FeatureStore store;
    AnnotationSet anns;
    std::vector<std::vector<double>> class_dirs; // n_classes x D, orthonormal
};

inline SynthDataset generate(const SynthConfig& cfg) {
    cfg.validate();
    SynthDataset ds;
    ds.class_dirs = detail::class_directions(cfg);
    ds.store.dim = cfg.feature_dim;
    ds.store.unit_frames = cfg.unit_frames;
    const std::int64_t U = cfg.units_per_video, D = cfg.feature_dim;
    const double duration_s = static_cast<double>(U * cfg.unit_frames) / cfg.fps;
    const double unit_s = static_cast<double>(cfg.unit_frames) / cfg.fps;

    for (std::int64_t v = 0; v < cfg.n_videos; ++v) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "%s%04lld", cfg.id_prefix.c_str(),
                      static_cast<long long>(v));
        std::string vid = idbuf;
        // The per-video stream is keyed by the video *id*, not the index: one
        // seed fixes the class directions (the "world"), and invocations with
        // different id prefixes draw disjoint, identically distributed videos
        // from that world — which is how matched train/test splits are made.
        Rng rng(sub_seed(cfg.seed, "synth/video/" + vid));

        std::vector<double> feats(static_cast<std::size_t>(U * D));
        for (double& x : feats) x = rng.normal(0.0, cfg.noise_sigma);

        std::int64_t n_act = rng.uniform_int(cfg.actions_min, cfg.actions_max);
        struct Placed {
            std::int64_t s, e, cls;
        };
        std::vector<Placed> spans;
        for (std::int64_t a = 0; a < n_act; ++a) {
            std::int64_t len =
                cfg.duration_scales[rng.uniform_below(cfg.duration_scales.size())];
            bool placed = false;
            for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
                std::int64_t s =
                    static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(U - len + 1)));
                std::int64_t e = s + len;
                bool ok = true;
                for (const Placed& p : spans)
                    if (!(e + 2 <= p.s || s >= p.e + 2)) ok = false;
                if (ok) {
                    spans.push_back({s, e, rng.uniform_int(0, cfg.n_classes - 1)});
                    placed = true;
                }
            }
            if (!placed)
                throw error(errc::data, "synth: cannot place " + std::to_string(n_act) +
                                            " actions in video " + vid);
        }
        for (const Placed& p : spans) {
            const auto& mu = ds.class_dirs[static_cast<std::size_t>(p.cls)];
            for (std::int64_t j = p.s; j < p.e; ++j) {
                double f = detail::ramp_factor(std::min(j - p.s, p.e - 1 - j),
                                               cfg.boundary_ramp_units) *
                           cfg.signal_gain;
                for (std::int64_t d = 0; d < D; ++d)
                    feats[static_cast<std::size_t>(j * D + d)] += f * mu[static_cast<std::size_t>(d)];
            }
        }

        VideoRecord rec;
        rec.video_id = vid;
        rec.duration_s = duration_s;
        rec.fps = cfg.fps;
        rec.unit_frames = cfg.unit_frames;
        rec.units = U;
        rec.dim = D;
        rec.unit_features.resize(static_cast<std::size_t>(U * D));
        for (std::size_t i = 0; i < feats.size(); ++i)
            rec.unit_features[i] = static_cast<float>(feats[i]);
        rec.build_prefix();
        ds.store.videos.emplace(vid, std::move(rec));

        VideoAnnotation va;
        va.duration_s = duration_s;
        va.fps = cfg.fps;
        std::sort(spans.begin(), spans.end(),
                  [](const Placed& a, const Placed& b) { return a.s < b.s; });
        for (const Placed& p : spans)
            va.actions.push_back({vid,
                                  {static_cast<double>(p.s) * unit_s,
                                   static_cast<double>(p.e) * unit_s},
                                  "class" + std::to_string(p.cls)});
        ds.anns.emplace(vid, std::move(va));
    }
    return ds;
}

// Learnability oracle: for each class direction, slide ramped matched-filter
// templates of every planted duration over the per-unit projections and score
// each window by its Gaussian log-likelihood ratio. Global NMS at 0.5, then
// the top `retention` windows per video. Scores pass through a tempered
// logistic purely to land in [0,1]; the ranking is the raw LLR's.
inline std::vector<Proposal> matched_filter_oracle(const SynthDataset& ds,
                                                   const SynthConfig& cfg,
                                                   std::int64_t retention = 256,
                                                   double nms_threshold = 0.5) {
    constexpr double score_temperature = 50.0;
    std::vector<Proposal> all;
    for (const auto& [vid, rec] : ds.store.videos) {
        const std::int64_t U = rec.units, D = rec.dim;
        std::vector<Proposal> cands;
        for (std::int64_t k = 0; k < cfg.n_classes; ++k) {
            const auto& mu = ds.class_dirs[static_cast<std::size_t>(k)];
            std::vector<double> proj(static_cast<std::size_t>(U), 0.0);
            for (std::int64_t u = 0; u < U; ++u) {
                const float* row = rec.unit_features.data() + u * D;
                double s = 0.0;
                for (std::int64_t d = 0; d < D; ++d) s += row[d] * mu[static_cast<std::size_t>(d)];
                proj[static_cast<std::size_t>(u)] = s;
            }
            for (std::int64_t n : cfg.duration_scales) {
                if (n > U) continue;
                std::vector<double> tmpl(static_cast<std::size_t>(n));
                double energy = 0.0;
                for (std::int64_t j = 0; j < n; ++j) {
                    tmpl[static_cast<std::size_t>(j)] =
                        detail::ramp_factor(std::min(j, n - 1 - j), cfg.boundary_ramp_units) *
                        cfg.signal_gain;
                    energy += tmpl[static_cast<std::size_t>(j)] * tmpl[static_cast<std::size_t>(j)];
                }
                for (std::int64_t a = 0; a + n <= U; ++a) {
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < n; ++j)
                        dot += tmpl[static_cast<std::size_t>(j)] * proj[static_cast<std::size_t>(a + j)];
                    double ll = (dot - 0.5 * energy) / (cfg.noise_sigma * cfg.noise_sigma);
                    double score = 1.0 / (1.0 + std::exp(-ll / score_temperature));
                    cands.push_back({vid,
                                     units_to_seconds({a, a + n}, rec.unit_frames, rec.fps),
                                     score,
                                     {}});
                }
            }
        }
        std::vector<Proposal> kept = nms(std::move(cands), nms_threshold);
        if (static_cast<std::int64_t>(kept.size()) > retention)
            kept.resize(static_cast<std::size_t>(retention));
        all.insert(all.end(), kept.begin(), kept.end());
    }
    return all;
}

inline double oracle_ar_f1(const SynthDataset& ds, const SynthConfig& cfg) {
    std::vector<Proposal> props = matched_filter_oracle(ds, cfg);
    GtsByVideo gts = gts_from_annotations(ds.anns);
    VideoLengths lengths = lengths_from_annotations(ds.anns);
    ProposalsByVideo retained =
        retrieve(group_by_video(props), RetrievalRule::frequency(1.0), lengths);
    return average_recall(gts, retained);
}

inline nlohmann::json synth_config_json(const SynthConfig& cfg) {
    nlohmann::json j;
    j["n_videos"] = cfg.n_videos;
    j["units_per_video"] = cfg.units_per_video;
    j["feature_dim"] = cfg.feature_dim;
    j["unit_frames"] = cfg.unit_frames;
    j["fps"] = cfg.fps;
    j["n_classes"] = cfg.n_classes;
    j["actions_min"] = cfg.actions_min;
    j["actions_max"] = cfg.actions_max;
    j["duration_scales"] = cfg.duration_scales;
    j["noise_sigma"] = cfg.noise_sigma;
    j["signal_gain"] = cfg.signal_gain;
    j["boundary_ramp_units"] = cfg.boundary_ramp_units;
    j["seed"] = cfg.seed;
    j["id_prefix"] = cfg.id_prefix;
    return j;
}

// Writes features/<id>.trnf, manifest.json, annotations.json and
// synth_meta.json (config echo + oracle result) under out_dir.
inline void write_dataset(const std::string& out_dir, const SynthDataset& ds,
                          const SynthConfig& cfg, double oracle_ar) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "features");
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [vid, rec] : ds.store.videos) {
        std::string rel = "features/" + vid + ".trnf";
        trnf::write(fs::path(out_dir) / rel, static_cast<std::uint32_t>(rec.dim),
                    static_cast<std::uint32_t>(rec.units), rec.unit_features.data());
        manifest.push_back({{"id", vid},
                            {"path", rel},
                            {"fps", rec.fps},
                            {"total_frames", rec.units * rec.unit_frames},
                            {"unit_frames", rec.unit_frames}});
    }
    {
        std::ofstream f(fs::path(out_dir) / "manifest.json");
        if (!f) throw error(errc::io, "cannot write manifest in " + out_dir);
        f << manifest.dump(2) << '\n';
    }
    save_annotations((fs::path(out_dir) / "annotations.json").string(), ds.anns);
    nlohmann::json meta;
    meta["config"] = synth_config_json(cfg);
    meta["oracle"] = {{"ar_f1", oracle_ar}, {"nms_threshold", 0.5}, {"retention", 256}};
    std::ofstream f(fs::path(out_dir) / "synth_meta.json");
    if (!f) throw error(errc::io, "cannot write synth_meta.json in " + out_dir);
    f << meta.dump(2) << '\n';
}

} // namespace turn
