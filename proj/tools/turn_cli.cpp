// turn — temporal action proposal toolkit.
// Subcommands cover the full workflow: synthesize a benchmark dataset, train
// the unit-regression proposal model, generate proposals (model or baseline),
// evaluate recall/AP metrics, correlate metric series, and benchmark scoring
// throughput. All randomness flows from one --seed through documented
// per-purpose derived seeds, so every artifact is byte-reproducible.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <turn/core.hpp>
#include <turn/featurestore.hpp>
#include <turn/io.hpp>
#include <turn/metrics.hpp>
#include <turn/model.hpp>
#include <turn/proposer.hpp>
#include <turn/rng.hpp>
#include <turn/sampling.hpp>
#include <turn/synth.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config-file plumbing: every flag has a same-named config-file key; values
// from --config fill in any option the command line did not set explicitly.
// Unknown keys are rejected.
// ---------------------------------------------------------------------------

struct ConfigBinder {
    struct Entry {
        CLI::Option* opt = nullptr;
        std::function<void(const json&)> apply;
    };
    std::map<std::string, Entry> keys;

    template <typename T>
    void bind(const std::string& key, CLI::Option* opt, T* var) {
        keys[key] = {opt, [var, key](const json& v) {
                         try {
                             *var = v.get<T>();
                         } catch (const json::exception&) {
                             throw turn::error(turn::errc::config,
                                               "config key '" + key + "' has the wrong type");
                         }
                     }};
    }

    void apply_file(const std::string& path) const {
        std::ifstream is(path);
        if (!is) throw turn::error(turn::errc::io, "cannot open config: " + path);
        json j;
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw turn::error(turn::errc::format,
                              "config " + path + ": bad JSON: " + e.what());
        }
        if (!j.is_object())
            throw turn::error(turn::errc::format, "config " + path + ": not a JSON object");
        for (const auto& [key, val] : j.items()) {
            auto it = keys.find(key);
            if (it == keys.end())
                throw turn::error(turn::errc::config, "unknown config key: " + key);
            if (it->second.opt && it->second.opt->count() > 0) continue; // flag overrides
            it->second.apply(val);
        }
    }
};

void run_config(const ConfigBinder& binder, const std::string& path) {
    if (!path.empty()) binder.apply_file(path);
}

template <typename F>
void parallel_videos(std::size_t n, std::int64_t threads, F body) {
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::int64_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::string default_in(const std::string& data_dir, const char* name,
                       const std::string& override_path) {
    if (!override_path.empty()) return override_path;
    return (fs::path(data_dir) / name).string();
}

void write_sidecar_meta(const std::string& out_path, const char* command, const json& cfg) {
    json meta{{"command", command}, {"config", cfg}};
    turn::write_json_file(out_path + ".meta.json", meta);
}

std::vector<double> step_grid(double lo, double hi, double step) {
    std::vector<double> g;
    for (int i = 0;; ++i) {
        double x = lo + step * i;
        if (x > hi + 1e-12) break;
        g.push_back(std::min(x, hi));
    }
    return g;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    turn::SynthConfig cfg;
    std::string out_dir, config_path;
};

void setup_synth(CLI::App& app, SynthArgs& a, ConfigBinder& b) {
    auto* s = app.add_subcommand("synth", "Generate a synthetic unit-feature benchmark "
                                          "(features + manifest + annotations + learnability "
                                          "oracle report)");
    b.bind("out", s->add_option("--out", a.out_dir, "output dataset directory (required)"),
           &a.out_dir);
    b.bind("n_videos",
           s->add_option("--n-videos", a.cfg.n_videos, "number of videos (required)"),
           &a.cfg.n_videos);
    b.bind("units_per_video",
           s->add_option("--units", a.cfg.units_per_video,
                         "units per video [toolkit default: 256]"),
           &a.cfg.units_per_video);
    b.bind("feature_dim",
           s->add_option("--dim", a.cfg.feature_dim,
                         "per-unit feature dimension [toolkit default: 32]"),
           &a.cfg.feature_dim);
    b.bind("unit_frames",
           s->add_option("--unit-frames", a.cfg.unit_frames,
                         "frames per unit [method default: 16]"),
           &a.cfg.unit_frames);
    b.bind("fps", s->add_option("--fps", a.cfg.fps, "frames per second [toolkit default: 16]"),
           &a.cfg.fps);
    b.bind("n_classes",
           s->add_option("--n-classes", a.cfg.n_classes,
                         "planted action classes [toolkit default: 4]"),
           &a.cfg.n_classes);
    b.bind("actions_min",
           s->add_option("--actions-min", a.cfg.actions_min,
                         "min actions per video [toolkit default: 1]"),
           &a.cfg.actions_min);
    b.bind("actions_max",
           s->add_option("--actions-max", a.cfg.actions_max,
                         "max actions per video [toolkit default: 4]"),
           &a.cfg.actions_max);
    b.bind("duration_scales",
           s->add_option("--duration-scales", a.cfg.duration_scales,
                         "planted action lengths in units, pyramid-aligned "
                         "[toolkit default: 2,4,8,16,32]")
               ->delimiter(','),
           &a.cfg.duration_scales);
    b.bind("noise_sigma",
           s->add_option("--noise-sigma", a.cfg.noise_sigma,
                         "background feature stddev [toolkit default: 1.0]"),
           &a.cfg.noise_sigma);
    b.bind("signal_gain",
           s->add_option("--signal-gain", a.cfg.signal_gain,
                         "planted class-direction gain [toolkit default: 2.5]"),
           &a.cfg.signal_gain);
    b.bind("boundary_ramp_units",
           s->add_option("--ramp-units", a.cfg.boundary_ramp_units,
                         "linear boundary ramp width in units [toolkit default: 1]"),
           &a.cfg.boundary_ramp_units);
    b.bind("seed", s->add_option("--seed", a.cfg.seed, "global seed [toolkit default: 0]"),
           &a.cfg.seed);
    b.bind("id_prefix",
           s->add_option("--id-prefix", a.cfg.id_prefix,
                         "video id prefix [toolkit default: v]"),
           &a.cfg.id_prefix);
    s->add_option("--config", a.config_path, "JSON config file; flags override its values");

    s->callback([&a, &b] {
        run_config(b, a.config_path);
        if (a.out_dir.empty())
            throw turn::error(turn::errc::config, "synth: --out is required");
        a.cfg.validate();
        turn::SynthDataset ds = turn::generate(a.cfg);
        double ar = turn::oracle_ar_f1(ds, a.cfg);
        turn::write_dataset(a.out_dir, ds, a.cfg, ar);
        std::printf("synth: wrote %lld videos to %s oracle_ar_f1=%.4f\n",
                    static_cast<long long>(a.cfg.n_videos), a.out_dir.c_str(), ar);
    });
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data_dir, out_ckpt, trace_path, manifest, annotations, config_path;
    turn::TrainConfig tc;
    bool no_context = false;
    bool cfg_use_context = true;
};

void setup_train(CLI::App& app, TrainArgs& a, ConfigBinder& b) {
    auto* s = app.add_subcommand("train", "Train the two-head proposal network on a dataset "
                                          "directory; writes a checkpoint and a loss-trace CSV");
    b.bind("data", s->add_option("--data", a.data_dir, "dataset directory (required)"),
           &a.data_dir);
    b.bind("out", s->add_option("--out", a.out_ckpt, "output checkpoint path (required)"),
           &a.out_ckpt);
    b.bind("trace",
           s->add_option("--trace", a.trace_path,
                         "loss-trace CSV path [toolkit default: <out>.trace.csv]"),
           &a.trace_path);
    b.bind("manifest",
           s->add_option("--manifest", a.manifest,
                         "manifest path [toolkit default: <data>/manifest.json]"),
           &a.manifest);
    b.bind("annotations",
           s->add_option("--annotations", a.annotations,
                         "annotations path [toolkit default: <data>/annotations.json]"),
           &a.annotations);
    b.bind("steps",
           s->add_option("--steps", a.tc.steps, "training steps [toolkit default: 8000]"),
           &a.tc.steps);
    b.bind("lr", s->add_option("--lr", a.tc.adam.lr, "Adam learning rate [method default: 0.005]"),
           &a.tc.adam.lr);
    b.bind("batch_size",
           s->add_option("--batch", a.tc.batch_size, "minibatch size [method default: 128]"),
           &a.tc.batch_size);
    b.bind("bg_ratio",
           s->add_option("--bg-ratio", a.tc.bg_ratio,
                         "background:positive sampling ratio [method default: 10]"),
           &a.tc.bg_ratio);
    b.bind("lambda",
           s->add_option("--lambda", a.tc.lambda,
                         "regression loss weight [method default: 2.0]"),
           &a.tc.lambda);
    b.bind("hidden",
           s->add_option("--hidden", a.tc.model.hidden,
                         "hidden layer width [method default: 1000]"),
           &a.tc.model.hidden);
    b.bind("n_ctx",
           s->add_option("--n-ctx", a.tc.model.pyramid.n_ctx,
                         "context units per side [method default: 4]"),
           &a.tc.model.pyramid.n_ctx);
    b.bind("scales",
           s->add_option("--scales", a.tc.model.pyramid.scales,
                         "pyramid clip scales in units [method default: 1,2,4,8,16,32]")
               ->delimiter(','),
           &a.tc.model.pyramid.scales);
    b.bind("use_context",
           s->add_flag("--no-context", a.no_context,
                       "ablation: zero the context feature blocks (config key use_context)"),
           &a.cfg_use_context);
    b.bind("seed", s->add_option("--seed", a.tc.seed, "global seed [toolkit default: 0]"),
           &a.tc.seed);
    b.bind("trace_every",
           s->add_option("--trace-every", a.tc.trace_every,
                         "trace sampling interval in steps [toolkit default: 100]"),
           &a.tc.trace_every);
    s->add_option("--config", a.config_path, "JSON config file; flags override its values");

    s->callback([&a, &b] {
        run_config(b, a.config_path);
        if (a.data_dir.empty() || a.out_ckpt.empty())
            throw turn::error(turn::errc::config, "train: --data and --out are required");
        a.tc.model.pyramid.use_context = a.no_context ? false : a.cfg_use_context;
        turn::FeatureStore store =
            turn::load_store(default_in(a.data_dir, "manifest.json", a.manifest));
        turn::AnnotationSet anns =
            turn::load_annotations(default_in(a.data_dir, "annotations.json", a.annotations));
        a.tc.model.dim = store.dim;
        turn::TrainResult res = turn::train(store, anns, a.tc);
        turn::CheckpointMeta meta;
        meta.lr = a.tc.adam.lr;
        meta.lambda = a.tc.lambda;
        meta.batch_size = a.tc.batch_size;
        meta.bg_ratio = a.tc.bg_ratio;
        meta.steps = a.tc.steps;
        meta.seed = a.tc.seed;
        turn::save_checkpoint(a.out_ckpt, res.params, meta);

        std::string trace = a.trace_path.empty() ? a.out_ckpt + ".trace.csv" : a.trace_path;
        {
            std::ofstream os(trace, std::ios::binary | std::ios::trunc);
            if (!os) throw turn::error(turn::errc::io, "cannot open for write: " + trace);
            os << "step,loss,cls_loss,reg_loss\n";
            char buf[128];
            for (const turn::TraceRow& r : res.trace) {
                std::snprintf(buf, sizeof buf, "%lld,%.6g,%.6g,%.6g\n",
                              static_cast<long long>(r.step), r.loss, r.cls, r.reg);
                os << buf;
            }
        }
        json cfg{{"data", a.data_dir},
                 {"out", a.out_ckpt},
                 {"trace", trace},
                 {"steps", a.tc.steps},
                 {"lr", a.tc.adam.lr},
                 {"batch_size", a.tc.batch_size},
                 {"bg_ratio", a.tc.bg_ratio},
                 {"lambda", a.tc.lambda},
                 {"hidden", a.tc.model.hidden},
                 {"n_ctx", a.tc.model.pyramid.n_ctx},
                 {"scales", a.tc.model.pyramid.scales},
                 {"use_context", a.tc.model.pyramid.use_context},
                 {"seed", a.tc.seed},
                 {"trace_every", a.tc.trace_every}};
        write_sidecar_meta(trace, "train", cfg);
        turn::TraceRow last = res.trace.empty() ? turn::TraceRow{} : res.trace.back();
        std::printf("train: %lld steps pool=%lld+/%lld- final loss=%.4f (cls=%.4f reg=%.4f) -> %s\n",
                    static_cast<long long>(a.tc.steps),
                    static_cast<long long>(res.pool_positives),
                    static_cast<long long>(res.pool_negatives), last.loss, last.cls, last.reg,
                    a.out_ckpt.c_str());
    });
}

// ---------------------------------------------------------------------------
// propose
// ---------------------------------------------------------------------------

struct ProposeArgs {
    std::string checkpoint, data_dir, out, manifest, config_path;
    double nms_threshold = 0.5;
    bool no_regression = false;
    bool cfg_apply_regression = true;
    std::int64_t threads = 1;
};

void setup_propose(CLI::App& app, ProposeArgs& a, ConfigBinder& b) {
    auto* s = app.add_subcommand("propose", "Score and refine every pyramid clip with a trained "
                                            "checkpoint, then NMS; writes proposal JSON lines");
    b.bind("checkpoint",
           s->add_option("--checkpoint", a.checkpoint, "trained checkpoint (required)"),
           &a.checkpoint);
    b.bind("data", s->add_option("--data", a.data_dir, "dataset directory (required)"),
           &a.data_dir);
    b.bind("out", s->add_option("--out", a.out, "output proposal JSONL path (required)"),
           &a.out);
    b.bind("manifest",
           s->add_option("--manifest", a.manifest,
                         "manifest path [toolkit default: <data>/manifest.json]"),
           &a.manifest);
    b.bind("nms_threshold",
           s->add_option("--nms-threshold", a.nms_threshold,
                         "NMS tIoU threshold; one fixed pass per proposal set "
                         "[toolkit default: 0.5; for single-tIoU localization at theta the "
                         "method couples it as theta-0.1]"),
           &a.nms_threshold);
    b.bind("apply_regression",
           s->add_flag("--no-regression", a.no_regression,
                       "ablation: keep raw clip boundaries (config key apply_regression)"),
           &a.cfg_apply_regression);
    b.bind("threads",
           s->add_option("--threads", a.threads,
                         "worker threads over videos [toolkit default: 1]"),
           &a.threads);
    s->add_option("--config", a.config_path, "JSON config file; flags override its values");

    s->callback([&a, &b] {
        run_config(b, a.config_path);
        if (a.checkpoint.empty() || a.data_dir.empty() || a.out.empty())
            throw turn::error(turn::errc::config,
                              "propose: --checkpoint, --data and --out are required");
        turn::ModelParams params = turn::load_checkpoint(a.checkpoint);
        turn::FeatureStore store =
            turn::load_store(default_in(a.data_dir, "manifest.json", a.manifest));
        turn::ProposeOptions opt;
        opt.nms_threshold = a.nms_threshold;
        opt.apply_regression = a.no_regression ? false : a.cfg_apply_regression;

        std::vector<std::string> ids;
        for (const auto& [vid, rec] : store.videos) ids.push_back(vid);
        std::vector<std::vector<turn::Proposal>> per_video(ids.size());
        parallel_videos(ids.size(), a.threads, [&](std::size_t i) {
            per_video[i] = turn::propose(params, store, ids[i], params.cfg.pyramid, opt);
        });
        std::vector<turn::Proposal> all;
        for (auto& v : per_video) all.insert(all.end(), v.begin(), v.end());
        turn::write_proposals(a.out, all);
        json cfg{{"checkpoint", a.checkpoint},
                 {"data", a.data_dir},
                 {"out", a.out},
                 {"nms_threshold", a.nms_threshold},
                 {"apply_regression", opt.apply_regression},
                 {"threads", a.threads},
                 {"model",
                  {{"dim", params.cfg.dim},
                   {"hidden", params.cfg.hidden},
                   {"n_ctx", params.cfg.pyramid.n_ctx},
                   {"scales", params.cfg.pyramid.scales},
                   {"use_context", params.cfg.pyramid.use_context}}}};
        write_sidecar_meta(a.out, "propose", cfg);
        std::printf("propose: %zu proposals over %zu videos -> %s\n", all.size(), ids.size(),
                    a.out.c_str());
    });
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

struct BaselineArgs {
    std::string kind, data_dir, out, manifest, config_path;
    std::vector<std::int64_t> windows = {32, 64, 128, 256, 512};
    double overlap = 0.75;
    std::int64_t count = 1000;
    std::uint64_t seed = 0;
    std::int64_t threads = 1;
};

void setup_baseline(CLI::App& app, BaselineArgs& a, ConfigBinder& b) {
    auto* s = app.add_subcommand("baseline",
                                 "Generate sliding-window or random proposals as comparison "
                                 "baselines; writes proposal JSON lines");
    b.bind("kind", s->add_option("kind", a.kind, "baseline kind: sliding | random")
                       ->check(CLI::IsMember({"sliding", "random"})),
           &a.kind);
    b.bind("data", s->add_option("--data", a.data_dir, "dataset directory (required)"),
           &a.data_dir);
    b.bind("out", s->add_option("--out", a.out, "output proposal JSONL path (required)"),
           &a.out);
    b.bind("manifest",
           s->add_option("--manifest", a.manifest,
                         "manifest path [toolkit default: <data>/manifest.json]"),
           &a.manifest);
    b.bind("windows",
           s->add_option("--windows", a.windows,
                         "sliding window lengths in frames [toolkit default: "
                         "32,64,128,256,512; the method's full range is 16-512]")
               ->delimiter(','),
           &a.windows);
    b.bind("overlap",
           s->add_option("--overlap", a.overlap,
                         "sliding window overlap fraction [method default: 0.75]"),
           &a.overlap);
    b.bind("count",
           s->add_option("--count", a.count,
                         "random proposals per video [toolkit default: 1000]"),
           &a.count);
    b.bind("seed", s->add_option("--seed", a.seed, "global seed [toolkit default: 0]"),
           &a.seed);
    b.bind("threads",
           s->add_option("--threads", a.threads,
                         "worker threads over videos [toolkit default: 1]"),
           &a.threads);
    s->add_option("--config", a.config_path, "JSON config file; flags override its values");

    s->callback([&a, &b] {
        run_config(b, a.config_path);
        if (a.kind.empty() || a.data_dir.empty() || a.out.empty())
            throw turn::error(turn::errc::config,
                              "baseline: kind, --data and --out are required");
        turn::FeatureStore store =
            turn::load_store(default_in(a.data_dir, "manifest.json", a.manifest));
        std::vector<const turn::VideoRecord*> recs;
        for (const auto& [vid, rec] : store.videos) recs.push_back(&rec);
        std::vector<std::vector<turn::Proposal>> per_video(recs.size());
        parallel_videos(recs.size(), a.threads, [&](std::size_t i) {
            const turn::VideoRecord& rec = *recs[i];
            turn::Rng rng(turn::sub_seed(a.seed, "baseline/" + a.kind + "/" + rec.video_id));
            per_video[i] = a.kind == "sliding"
                               ? turn::sliding_window_baseline(rec, a.windows, a.overlap, rng)
                               : turn::random_baseline(rec, a.count, rng);
        });
        std::vector<turn::Proposal> all;
        for (auto& v : per_video) all.insert(all.end(), v.begin(), v.end());
        turn::write_proposals(a.out, all);
        json cfg{{"kind", a.kind},          {"data", a.data_dir}, {"out", a.out},
                 {"windows", a.windows},    {"overlap", a.overlap},
                 {"count", a.count},        {"seed", a.seed},     {"threads", a.threads}};
        write_sidecar_meta(a.out, "baseline", cfg);
        std::printf("baseline(%s): %zu proposals over %zu videos -> %s\n", a.kind.c_str(),
                    all.size(), recs.size(), a.out.c_str());
    });
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string proposals, annotations, metric, out_curve, out_summary, rule = "frequency";
    std::vector<double> grid;      // retrieval levels for ar_* families
    std::vector<double> ar_grid;   // tIoU grid AR averages over
    std::vector<double> tiou_grid; // x grid for recall_tiou
    double tiou = 0.5;             // matching threshold for map
    double level = 1.0;            // retrieval level for recall_tiou
    std::string config_path;
};

json eval_config_json(const EvalArgs& a) {
    return json{{"proposals", a.proposals},
                {"annotations", a.annotations},
                {"metric", a.metric},
                {"out_curve", a.out_curve},
                {"out_summary", a.out_summary},
                {"rule", a.rule},
                {"grid", a.grid},
                {"ar_grid", a.ar_grid},
                {"tiou_grid", a.tiou_grid},
                {"tiou", a.tiou},
                {"level", a.level}};
}

void setup_eval(CLI::App& app, EvalArgs& a, ConfigBinder& b) {
    auto* s = app.add_subcommand("eval", "Evaluate a proposal file against annotations: "
                                         "AR curves, Recall@X-tIoU, or detection mAP");
    b.bind("proposals",
           s->add_option("--proposals", a.proposals, "proposal JSONL file (required)"),
           &a.proposals);
    b.bind("annotations",
           s->add_option("--annotations", a.annotations, "annotation JSON file (required)"),
           &a.annotations);
    b.bind("metric",
           s->add_option("--metric", a.metric,
                         "ar_f | ar_an | ar_n | recall_tiou | map (required)")
               ->check(CLI::IsMember({"ar_f", "ar_an", "ar_n", "recall_tiou", "map"})),
           &a.metric);
    b.bind("out_curve",
           s->add_option("--out-curve", a.out_curve,
                         "curve CSV output (required for curve metrics)"),
           &a.out_curve);
    b.bind("out_summary",
           s->add_option("--out-summary", a.out_summary,
                         "summary JSON output with AR@F=1.0, AR@N=100, mAP@0.5"),
           &a.out_summary);
    b.bind("grid",
           s->add_option("--grid", a.grid,
                         "retrieval levels for ar_f/ar_an/ar_n [toolkit defaults: "
                         "F,rho 0.1..1.0 step 0.1; N 1,2,5,10,20,50,100,200,500,1000]")
               ->delimiter(','),
           &a.grid);
    b.bind("ar_grid",
           s->add_option("--ar-grid", a.ar_grid,
                         "tIoU grid AR averages over [method default: 0.5..1.0 step 0.05]")
               ->delimiter(','),
           &a.ar_grid);
    b.bind("tiou_grid",
           s->add_option("--tiou-grid", a.tiou_grid,
                         "tIoU grid for recall_tiou [toolkit default: 0..1 step 0.05]")
               ->delimiter(','),
           &a.tiou_grid);
    b.bind("tiou",
           s->add_option("--tiou", a.tiou,
                         "tIoU matching threshold for map [toolkit default: 0.5]"),
           &a.tiou);
    b.bind("rule",
           s->add_option("--rule", a.rule,
                         "retrieval rule for recall_tiou: top_n | frequency | ratio "
                         "[toolkit default: frequency]")
               ->check(CLI::IsMember({"top_n", "frequency", "ratio"})),
           &a.rule);
    b.bind("level",
           s->add_option("--level", a.level,
                         "retrieval level for recall_tiou [toolkit default: 1.0]"),
           &a.level);
    s->add_option("--config", a.config_path, "JSON config file; flags override its values");

    s->callback([&a, &b] {
        run_config(b, a.config_path);
        if (a.proposals.empty() || a.annotations.empty() || a.metric.empty())
            throw turn::error(turn::errc::config,
                              "eval: --proposals, --annotations and --metric are required");
        std::vector<turn::Proposal> props = turn::read_proposals(a.proposals);
        turn::AnnotationSet anns = turn::load_annotations(a.annotations);
        turn::GtsByVideo gts = turn::gts_from_annotations(anns);
        turn::VideoLengths lengths = turn::lengths_from_annotations(anns);
        turn::ProposalsByVideo by_video = turn::group_by_video(props);
        std::vector<double> ar_grid = a.ar_grid.empty() ? turn::ar_default_grid() : a.ar_grid;

        auto family = [&](const std::string& m) {
            if (m == "ar_f") return turn::RetrievalRule::Kind::frequency;
            if (m == "ar_an") return turn::RetrievalRule::Kind::ratio;
            return turn::RetrievalRule::Kind::top_n;
        };
        json cfg = eval_config_json(a);
        double headline = 0.0;

        if (a.metric == "map") {
            for (const turn::Proposal& p : props)
                if (p.label.empty())
                    throw turn::error(turn::errc::data,
                                      "map: every proposal needs a class label");
            headline = turn::detection_map(props, gts, a.tiou);
            std::printf("eval map@%.2f = %.6f\n", a.tiou, headline);
        } else if (a.metric == "recall_tiou") {
            std::vector<double> grid =
                a.tiou_grid.empty() ? step_grid(0.0, 1.0, 0.05) : a.tiou_grid;
            turn::RetrievalRule rule{a.rule == "top_n" ? turn::RetrievalRule::Kind::top_n
                                     : a.rule == "ratio" ? turn::RetrievalRule::Kind::ratio
                                                         : turn::RetrievalRule::Kind::frequency,
                                     a.level};
            auto curve = turn::recall_x_tiou(gts, by_video, rule, lengths, grid);
            if (a.out_curve.empty())
                throw turn::error(turn::errc::config, "eval: --out-curve is required");
            turn::write_curve_csv(a.out_curve, curve, "tiou", "recall");
            write_sidecar_meta(a.out_curve, "eval", cfg);
            headline = curve.back().y;
            std::printf("eval recall_tiou: %zu points -> %s\n", curve.size(),
                        a.out_curve.c_str());
        } else {
            std::vector<double> xs = a.grid;
            if (xs.empty()) {
                if (a.metric == "ar_n")
                    xs = {1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
                else
                    xs = step_grid(0.1, 1.0, 0.1);
            }
            auto curve = turn::ar_curve(gts, by_video, family(a.metric), xs, lengths, ar_grid);
            if (a.out_curve.empty())
                throw turn::error(turn::errc::config, "eval: --out-curve is required");
            turn::write_curve_csv(a.out_curve, curve, "x", "average_recall");
            write_sidecar_meta(a.out_curve, "eval", cfg);
            headline = curve.back().y;
            std::printf("eval %s: %zu points, last x=%.6g AR=%.6f -> %s\n", a.metric.c_str(),
                        curve.size(), curve.back().x, curve.back().y, a.out_curve.c_str());
        }

        if (!a.out_summary.empty()) {
            auto ar_at = [&](turn::RetrievalRule rule) {
                return turn::average_recall(
                    gts, turn::retrieve(by_video, rule, lengths), ar_grid);
            };
            json summary;
            summary["AR@F=1.0"] = ar_at(turn::RetrievalRule::frequency(1.0));
            summary["AR@N=100"] = ar_at(turn::RetrievalRule::top_n(100));
            bool labeled = !props.empty();
            for (const turn::Proposal& p : props)
                if (p.label.empty()) labeled = false;
            if (labeled)
                summary["mAP@0.5"] = turn::detection_map(props, gts, 0.5);
            else
                summary["mAP@0.5"] = nullptr;
            summary["config"] = cfg;
            turn::write_json_file(a.out_summary, summary);
        }
        (void)headline;
    });
}

// ---------------------------------------------------------------------------
// correlate
// ---------------------------------------------------------------------------

struct CorrelateArgs {
    std::string annotations, series, out, config_path;
};

void setup_correlate(CLI::App& app, CorrelateArgs& a, ConfigBinder& b) {
    auto* s = app.add_subcommand(
        "correlate", "Pearson correlation between proposal metrics (AR@F=1.0, AR@N=100, "
                     "R@N=100 tIoU=0.5) and a user-supplied score per proposal file");
    b.bind("annotations",
           s->add_option("--annotations", a.annotations, "annotation JSON file (required)"),
           &a.annotations);
    b.bind("series",
           s->add_option("--series", a.series,
                         "JSON array of {\"proposals\": path, \"value\": number} (required)"),
           &a.series);
    b.bind("out", s->add_option("--out", a.out, "output JSON path (required)"), &a.out);
    s->add_option("--config", a.config_path, "JSON config file; flags override its values");

    s->callback([&a, &b] {
        run_config(b, a.config_path);
        if (a.annotations.empty() || a.series.empty() || a.out.empty())
            throw turn::error(turn::errc::config,
                              "correlate: --annotations, --series and --out are required");
        std::ifstream is(a.series);
        if (!is) throw turn::error(turn::errc::io, "cannot open series: " + a.series);
        json j;
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw turn::error(turn::errc::format,
                              "series " + a.series + ": bad JSON: " + e.what());
        }
        if (!j.is_array() || j.size() < 2)
            throw turn::error(turn::errc::data,
                              "series must be a JSON array with at least 2 entries");
        turn::AnnotationSet anns = turn::load_annotations(a.annotations);
        turn::GtsByVideo gts = turn::gts_from_annotations(anns);
        turn::VideoLengths lengths = turn::lengths_from_annotations(anns);

        std::vector<double> values, ar_f1, ar_n100, r_n100;
        for (const auto& entry : j) {
            if (!entry.is_object() || !entry.contains("proposals") || !entry.contains("value"))
                throw turn::error(turn::errc::format,
                                  "series entries need 'proposals' and 'value'");
            for (const auto& [key, val] : entry.items())
                if (key != "proposals" && key != "value")
                    throw turn::error(turn::errc::config,
                                      "unknown series key: " + key);
            std::string ppath = entry.at("proposals").get<std::string>();
            values.push_back(entry.at("value").get<double>());
            turn::ProposalsByVideo by = turn::group_by_video(turn::read_proposals(ppath));
            ar_f1.push_back(turn::average_recall(
                gts, turn::retrieve(by, turn::RetrievalRule::frequency(1.0), lengths)));
            ar_n100.push_back(turn::average_recall(
                gts, turn::retrieve(by, turn::RetrievalRule::top_n(100), lengths)));
            r_n100.push_back(turn::recall_at(
                gts, turn::retrieve(by, turn::RetrievalRule::top_n(100), lengths), 0.5));
        }
        json out;
        out["n"] = values.size();
        out["r"] = {{"AR@F=1.0", turn::pearson(ar_f1, values)},
                    {"AR@N=100", turn::pearson(ar_n100, values)},
                    {"R@N=100,tIoU=0.5", turn::pearson(r_n100, values)}};
        out["config"] = {{"annotations", a.annotations}, {"series", a.series}, {"out", a.out}};
        turn::write_json_file(a.out, out);
        std::printf("correlate: n=%zu r(AR@F=1.0)=%.4f -> %s\n", values.size(),
                    out["r"]["AR@F=1.0"].get<double>(), a.out.c_str());
    });
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string checkpoint, data_dir, manifest, out, config_path;
    std::int64_t repeat = 3;
    std::int64_t threads = 1;
};

void setup_bench(CLI::App& app, BenchArgs& a, ConfigBinder& b) {
    auto* s = app.add_subcommand("bench", "Measure clip-scoring throughput (features + forward "
                                          "pass) and the equivalent feature-consumption rate");
    b.bind("checkpoint",
           s->add_option("--checkpoint", a.checkpoint, "trained checkpoint (required)"),
           &a.checkpoint);
    b.bind("data", s->add_option("--data", a.data_dir, "dataset directory (required)"),
           &a.data_dir);
    b.bind("manifest",
           s->add_option("--manifest", a.manifest,
                         "manifest path [toolkit default: <data>/manifest.json]"),
           &a.manifest);
    b.bind("out", s->add_option("--out", a.out, "optional JSON report path"), &a.out);
    b.bind("repeat",
           s->add_option("--repeat", a.repeat, "scoring passes to time [toolkit default: 3]"),
           &a.repeat);
    b.bind("threads",
           s->add_option("--threads", a.threads,
                         "worker threads over videos [toolkit default: 1]"),
           &a.threads);
    s->add_option("--config", a.config_path, "JSON config file; flags override its values");

    s->callback([&a, &b] {
        run_config(b, a.config_path);
        if (a.checkpoint.empty() || a.data_dir.empty())
            throw turn::error(turn::errc::config, "bench: --checkpoint and --data are required");
        if (a.repeat < 1) throw turn::error(turn::errc::config, "bench: repeat must be >= 1");
        turn::ModelParams params = turn::load_checkpoint(a.checkpoint);
        turn::FeatureStore store =
            turn::load_store(default_in(a.data_dir, "manifest.json", a.manifest));
        std::vector<const turn::VideoRecord*> recs;
        for (const auto& [vid, rec] : store.videos) recs.push_back(&rec);

        std::int64_t clips_per_pass = 0, units_per_pass = 0;
        for (const turn::VideoRecord* rec : recs)
            for (const turn::ClipCandidate& c :
                 turn::build_pyramid(rec->units, params.cfg.pyramid)) {
                ++clips_per_pass;
                units_per_pass += c.clip.length();
            }
        if (clips_per_pass == 0) throw turn::error(turn::errc::data, "bench: no clips to score");

        volatile double sink = 0.0;
        auto t0 = std::chrono::steady_clock::now();
        for (std::int64_t r = 0; r < a.repeat; ++r) {
            parallel_videos(recs.size(), a.threads, [&](std::size_t i) {
                auto scored = turn::score_clips(params, *recs[i], params.cfg.pyramid);
                double acc = 0.0;
                for (const turn::RawScoredClip& sc : scored) acc += sc.action_prob;
                sink = sink + acc;
            });
        }
        auto t1 = std::chrono::steady_clock::now();
        double seconds = std::chrono::duration<double>(t1 - t0).count();
        double total_clips = static_cast<double>(clips_per_pass * a.repeat);
        double clips_per_s = total_clips / seconds;
        double mean_clip_units =
            static_cast<double>(units_per_pass) / static_cast<double>(clips_per_pass);
        double frames_per_s =
            clips_per_s * mean_clip_units * static_cast<double>(store.unit_frames);

        json report;
        report["clips_scored"] = clips_per_pass * a.repeat;
        report["seconds"] = seconds;
        report["clips_per_s"] = clips_per_s;
        report["mean_clip_units"] = mean_clip_units;
        report["unit_frames"] = store.unit_frames;
        report["frames_per_s"] = frames_per_s;
        report["frames_per_s_definition"] =
            "feature-consumption rate: frames_per_s = clips_per_s * mean_clip_units * "
            "unit_frames (frames represented by processed units per second)";
        report["config"] = {{"checkpoint", a.checkpoint}, {"data", a.data_dir},
                            {"repeat", a.repeat},         {"threads", a.threads},
                            {"dim", params.cfg.dim},      {"hidden", params.cfg.hidden}};
        std::printf("%s\n", report.dump().c_str());
        if (!a.out.empty()) turn::write_json_file(a.out, report);
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal action proposal toolkit: clip-pyramid candidates over reusable "
                 "unit features, two-head scoring/regression network, NMS, and the full "
                 "recall/AP evaluation methodology"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    TrainArgs train_args;
    ProposeArgs propose_args;
    BaselineArgs baseline_args;
    EvalArgs eval_args;
    CorrelateArgs correlate_args;
    BenchArgs bench_args;
    ConfigBinder synth_b, train_b, propose_b, baseline_b, eval_b, correlate_b, bench_b;

    setup_synth(app, synth_args, synth_b);
    setup_train(app, train_args, train_b);
    setup_propose(app, propose_args, propose_b);
    setup_baseline(app, baseline_args, baseline_b);
    setup_eval(app, eval_args, eval_b);
    setup_correlate(app, correlate_args, correlate_b);
    setup_bench(app, bench_args, bench_b);

    auto emit = [](int code, const char* kind, const std::string& msg) {
        json e{{"error", {{"exit_code", code}, {"kind", kind}, {"message", msg}}}};
        std::fprintf(stderr, "%s\n", e.dump().c_str());
        return code;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        return emit(static_cast<int>(turn::errc::config), "config", e.what());
    } catch (const turn::error& e) {
        static const char* kinds[] = {"", "", "config", "io", "format", "data", "internal"};
        return emit(static_cast<int>(e.code()), kinds[static_cast<int>(e.code())], e.what());
    } catch (const std::exception& e) {
        return emit(static_cast<int>(turn::errc::internal), "internal", e.what());
    }
    return 0;
}
